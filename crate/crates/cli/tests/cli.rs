use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use periodicity::config::SolverConfig;
use periodicity::tensor::{ingest_long_csv, IngestOptions};
use periodicity::{fit_all, GreedyOptions, SelectionProblem};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_periodicity"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_matches_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let sel = dir.path().join("sel.json");
    let coef = dir.path().join("coef.csv");
    let tensor = fixture("tensor.csv");
    let out = run(&["select", "-i", s(&tensor), "--sparsity", "3", "--order", "168", "-o", s(&sel)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["fit", "-i", s(&tensor), "--support", s(&sel), "-o", s(&coef)]);
    assert!(out.status.success());

    let t = ingest_long_csv(&tensor, &IngestOptions::default()).unwrap();
    let r = SelectionProblem::from_tensor(&t, 168)
        .unwrap()
        .select_greedy(3, &GreedyOptions::default())
        .unwrap();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sel).unwrap()).unwrap();
    let lags: Vec<usize> = serde_json::from_value(doc["support"].clone()).unwrap();
    assert_eq!(lags, r.support.lags());
    assert_eq!(doc["objective"].as_f64().unwrap(), r.objective);
    for (lag, w) in r.support.lags().iter().zip(&r.global_coeffs) {
        assert_eq!(doc["coefficients"][lag.to_string()].as_f64().unwrap(), *w);
    }
    assert_eq!(doc["config"]["sparsity"], 3);

    let field = fit_all(&t, 168, &r.support).unwrap();
    let mut expected = Vec::new();
    field.write_csv(&mut expected).unwrap();
    assert_eq!(fs::read(&coef).unwrap(), expected);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let sel = dir.path().join("sel.json");
    let out = run(&[
        "--config",
        s(&fixture("config.json")),
        "--sparsity",
        "2",
        "select",
        "-i",
        s(&fixture("tensor.csv")),
        "-o",
        s(&sel),
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sel).unwrap()).unwrap();
    let config: SolverConfig = serde_json::from_value(doc["config"].clone()).unwrap();
    assert_eq!(config.sparsity, 2);
    assert_eq!(config.thresholds, vec![0.5, 0.8]);
    assert!(doc["support"].as_array().unwrap().len() <= 2);
}

#[test]
fn empty_support_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let sup = dir.path().join("empty.json");
    fs::write(&sup, "[]").unwrap();
    let out = run(&["fit", "-i", s(&fixture("tensor.csv")), "--support", s(&sup)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn one_short_series_is_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.csv");
    let mut text = String::from("location,variable,time_index,count\n");
    for loc in ["a", "b"] {
        for t in 1..=40 {
            text.push_str(&format!("{loc},long,{t},{}\n", (t * 7) % 5));
        }
    }
    for t in 1..=3 {
        text.push_str(&format!("a,short,{t},{t}\n"));
    }
    fs::write(&input, text).unwrap();
    let sup = dir.path().join("sup.json");
    fs::write(&sup, "[1, 5]").unwrap();
    let out = run(&["--order", "5", "--target-lag", "5", "fit", "-i", s(&input), "--support", s(&sup)]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1 failed"), "{err}");
    let csv = String::from_utf8_lossy(&out.stdout);
    assert!(csv.lines().any(|l| l.starts_with("a,short,") && l.contains("failed")));
}

#[test]
fn exit_codes_follow_the_documented_taxonomy() {
    let tensor = fixture("tensor.csv");
    assert_eq!(run(&["--solver", "fast", "select", "-i", s(&tensor)]).status.code(), Some(1));
    assert_eq!(run(&["--target-lag", "500", "select", "-i", s(&tensor)]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["select", "-i", "/nonexistent.csv"]).status.code(), Some(2));
    let out = run(&["--solver", "exact", "--node-budget", "1", "select", "-i", s(&tensor)]);
    assert_eq!(out.status.code(), Some(3));
    let help = String::from_utf8_lossy(&run(&["--help"]).stdout).to_string();
    assert!(help.contains("Exit codes"));
}

#[test]
fn report_requires_something_to_do() {
    assert_eq!(run(&["report"]).status.code(), Some(1));
    let out = run(&["report", "-i", s(&fixture("tensor.csv")), "--weekly-profile"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn weekly_profile_and_scatter_exports() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec.csv");
    let sc = dir.path().join("sc.csv");
    let out = run(&[
        "--baseline",
        "v0",
        "report",
        "-i",
        s(&fixture("tensor.csv")),
        "--weekly-profile",
        "--recovery-out",
        s(&rec),
        "--scatter",
        "s1",
        "v1",
        "168",
        "--scatter-out",
        s(&sc),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = fs::read_to_string(rec).unwrap();
    assert!(rec.lines().nth(1).unwrap().starts_with("v0,3,"));
    assert!(rec.lines().nth(1).unwrap().ends_with(",100"));
    assert_eq!(fs::read_to_string(sc).unwrap().lines().count(), 1 + 504 - 168);
}
