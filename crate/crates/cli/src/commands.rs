use std::fs;
use std::io::Write;
use std::path::Path;

use periodicity::analytics::{
    daily_average, extract_strengths, lag_scatter, weekly_profile, write_scatter_csv,
    ProfileOptions,
};
use periodicity::config::{parse_support_json, SelectionDocument, SolverConfig};
use periodicity::simplex::fit_all_with;
use periodicity::synth::{generate, recovery_study, write_study_csv, StudySpec, SynthSpec};
use periodicity::tensor::{ingest_long_csv, ingest_wide_csv};
use periodicity::{
    CoefficientField, Error, MobilityTensor, Optimality, Result, SelectionProblem, Solver,
};
use serde::Serialize;

use crate::{Layout, ReportArgs};

/// Writes to a sibling temp file and renames it into place, or to stdout.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
            tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
            tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
            Ok(())
        }
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(value)?;
    s.push(b'\n');
    Ok(s)
}

fn load_tensor(config: &SolverConfig, path: &Path, layout: Layout) -> Result<MobilityTensor> {
    let opts = config.ingest_options();
    let tensor = match layout {
        Layout::Long => ingest_long_csv(path, &opts)?,
        Layout::Wide => ingest_wide_csv(path, &opts)?,
    };
    log::info!(
        "loaded {} locations x {} variables from {}",
        tensor.n_locations(),
        tensor.n_variables(),
        path.display()
    );
    Ok(tensor)
}

pub fn select(
    config: &SolverConfig,
    input: &Path,
    layout: Layout,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<()> {
    let tensor = load_tensor(config, input, layout)?;
    let problem = SelectionProblem::from_tensor(&tensor, config.order)?;
    let result = match config.solver {
        Solver::Exact => problem.select_exact(config.sparsity, &config.exact_options())?,
        Solver::Greedy => problem.select_greedy(config.sparsity, &config.greedy_options())?,
    };
    if result.optimality == Optimality::BudgetExhausted {
        eprintln!(
            "warning: node budget exhausted; support {} is the best found, not proven optimal",
            result.support
        );
    }
    eprintln!(
        "selected {} over {} series, objective {}",
        result.support, result.series_used, result.objective
    );
    if let Some(path) = trace {
        emit(Some(path), &csv_bytes(|b| result.write_trace_csv(b))?)?;
    }
    let doc = SelectionDocument::new(&result, config);
    emit(out, doc.to_json()?.as_bytes())
}

pub fn fit(
    config: &SolverConfig,
    input: &Path,
    layout: Layout,
    support: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(support).map_err(|e| Error::io(support, e))?;
    let support = parse_support_json(&text)?;
    let tensor = load_tensor(config, input, layout)?;
    eprintln!(
        "fitting {} series on {}",
        tensor.n_locations() * tensor.n_variables(),
        support
    );
    let field = fit_all_with(&tensor, config.order, &support, &config.simplex_options())?;
    let s = field.summary();
    for e in &field.entries {
        if let periodicity::FitOutcome::Failed { reason } = &e.outcome {
            eprintln!("{}: {reason}", tensor.series_label(e.key));
        }
    }
    eprintln!("{} fitted, {} missing, {} failed", s.fitted, s.missing, s.failed);
    emit(out, &csv_bytes(|b| field.write_csv(b))?)
}

#[derive(Serialize)]
struct ReportDocument<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    config: &'a SolverConfig,
}

pub fn report(config: &SolverConfig, args: &ReportArgs) -> Result<()> {
    let mut did_something = false;
    if let Some(path) = &args.coefficients {
        did_something = true;
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let field = CoefficientField::read_csv(std::io::BufReader::new(file), config.order)?;
        let report = extract_strengths(&field, config.target_lag, &config.thresholds)?;
        for v in &report.variables {
            let counts: Vec<String> = v
                .above
                .iter()
                .map(|t| format!("{} >= {}", t.count, t.threshold))
                .collect();
            eprintln!(
                "{}: mean strength {} over {} series; {}",
                v.variable,
                v.mean.map_or("n/a".into(), |m| format!("{m:.4}")),
                v.present,
                counts.join(", ")
            );
        }
        emit(args.out.as_deref(), &csv_bytes(|b| report.write_csv(b))?)?;
        if let Some(p) = &args.summary {
            emit(Some(p), &csv_bytes(|b| report.write_summary_csv(b))?)?;
        }
        if let Some(p) = &args.json {
            let doc = ReportDocument {
                body: &report,
                config,
            };
            emit(Some(p), &json_bytes(&doc)?)?;
        }
        if let Some(pair) = &args.diff {
            let diff = report.diff(&pair[0], &pair[1])?;
            let (neg, zero, pos) = diff.sign_counts();
            eprintln!(
                "{} - {}: {pos} increased, {zero} unchanged, {neg} decreased",
                pair[1], pair[0]
            );
            let bytes = csv_bytes(|b| diff.write_csv(b))?;
            match &args.diff_out {
                Some(p) => emit(Some(p), &bytes)?,
                None if args.out.is_some() => emit(None, &bytes)?,
                None => {
                    return Err(Error::Config(
                        "--diff needs --diff-out when the strength table goes to stdout".into(),
                    ))
                }
            }
        }
    } else if args.diff.is_some() || args.json.is_some() || args.summary.is_some() {
        return Err(Error::Config(
            "--diff, --json and --summary need --coefficients".into(),
        ));
    }

    if let Some(input) = &args.input {
        let tensor = load_tensor(config, input, args.layout)?;
        if args.weekly_profile {
            did_something = true;
            let baseline = config
                .baseline
                .clone()
                .ok_or_else(|| Error::Config("--weekly-profile needs --baseline".into()))?;
            let profile = weekly_profile(
                &tensor,
                &ProfileOptions {
                    baseline,
                    anchor: config.anchor,
                    cycle: None,
                },
            )?;
            for p in &profile.profiles {
                eprintln!(
                    "{}: {:.2}% of {} over {} complete cycles",
                    p.variable, p.recovery_percentage, profile.baseline, p.complete_cycles
                );
            }
            let recovery = csv_bytes(|b| profile.write_recovery_csv(b))?;
            match &args.recovery_out {
                Some(p) => emit(Some(p), &recovery)?,
                None if args.coefficients.is_none() && args.out.is_none() => {
                    emit(None, &recovery)?
                }
                None => {}
            }
            if let Some(p) = &args.profile_out {
                emit(Some(p), &csv_bytes(|b| profile.write_profile_csv(b))?)?;
            }
        }
        if let Some(s) = &args.scatter {
            did_something = true;
            let lag: usize = s[2]
                .parse()
                .map_err(|_| Error::Config(format!("invalid scatter lag `{}`", s[2])))?;
            let key = tensor.key(&s[0], &s[1])?;
            let pairs = lag_scatter(tensor.series_view(key)?, lag)?;
            let bytes = csv_bytes(|b| write_scatter_csv(&pairs, b))?;
            emit(args.scatter_out.as_deref(), &bytes)?;
        }
        if let Some(p) = &args.daily {
            did_something = true;
            let daily = daily_average(&tensor)?;
            emit(Some(p), &json_bytes(&daily)?)?;
        }
    }
    if !did_something {
        return Err(Error::Config(
            "nothing to report: give --coefficients, or --input with --weekly-profile, --scatter or --daily"
                .into(),
        ));
    }
    Ok(())
}

pub fn synth(
    config: &SolverConfig,
    spec: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    truth: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
    let mut spec = SynthSpec::from_json_str(&text)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (tensor, gt) = generate(&spec)?;
    if let Some(p) = truth {
        emit(Some(p), &json_bytes(&gt)?)?;
    }
    emit(out, &csv_bytes(|b| tensor.write_long_csv(b, config.time_base))?)
}

pub fn study(spec: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
    let study = StudySpec::from_json_str(&text)?;
    let rows = recovery_study(&study)?;
    for r in &rows {
        if r.failed > 0 {
            eprintln!(
                "{} {}: {} of {} runs failed",
                r.noise_model, r.noise_level, r.failed, r.seeds
            );
        }
    }
    emit(out, &csv_bytes(|b| write_study_csv(&rows, b))?)
}
