mod common;

use common::{as_f64, best_support_oracle, joint_oracle, random_counts, simplex_fit_oracle};
use periodicity::{
    evaluate_support, select_support_exact, select_support_greedy, ExactOptions, GreedyOptions,
    MobilityTensor, Optimality, SelectionProblem, SupportSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn random_instance(seed: u64, n: usize, len: usize) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_counts(&mut rng, len, 20)).collect()
}

fn tensor_of(series: Vec<Vec<u64>>) -> MobilityTensor {
    let n = series.len();
    MobilityTensor::new(
        (0..n).map(|i| format!("l{i}")).collect(),
        vec!["v".into()],
        series.into_iter().map(|s| vec![Some(s)]).collect(),
        "1h",
    )
    .unwrap()
}

#[test]
fn exact_matches_enumeration_on_random_instances() {
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(1..=3);
        let len = rng.random_range(20..=40);
        let d = rng.random_range(2..=8);
        let tau = rng.random_range(1..=3);
        let series = random_instance(seed, n, len);
        let xs = as_f64(&series);
        let (support, obj) = best_support_oracle(&xs, d, tau, 1e-9);
        let r = SelectionProblem::from_series(&xs, d)
            .unwrap()
            .select_exact(tau, &ExactOptions::default())
            .unwrap();
        assert_eq!(r.optimality, Optimality::Exact);
        assert_eq!(r.support.lags(), &support[..], "seed {seed}");
        assert!(close(r.objective, obj, 1e-10), "seed {seed}: {} vs {obj}", r.objective);
    }
}

#[test]
fn two_series_five_lags_pick_two() {
    let series = random_instance(5, 2, 30);
    let xs = as_f64(&series);
    let (support, obj) = best_support_oracle(&xs, 5, 2, 1e-9);
    let r = select_support_exact(&tensor_of(series), 5, 2, &ExactOptions::default()).unwrap();
    assert_eq!(r.support.lags(), &support[..]);
    assert!(close(r.objective, obj, 1e-10));
}

#[test]
fn mixed_periods_match_enumeration() {
    let a: Vec<u64> = (0..40).map(|t| [3, 11][t % 2]).collect();
    let b: Vec<u64> = (0..40).map(|t| [2, 7, 5][t % 3]).collect();
    let xs = as_f64(&[a.clone(), b.clone()]);
    let (support, obj) = best_support_oracle(&xs, 6, 2, 1e-9);
    let r = select_support_exact(&tensor_of(vec![a, b]), 6, 2, &ExactOptions::default()).unwrap();
    assert_eq!(r.support.lags(), &support[..]);
    assert!(close(r.objective, obj, 1e-10));
}

#[test]
fn noiseless_period_two() {
    let s: Vec<u64> = (0..20).map(|t| [4, 9][t % 2]).collect();
    let t = tensor_of(vec![s]);
    let exact = select_support_exact(&t, 3, 1, &ExactOptions::default()).unwrap();
    let greedy = select_support_greedy(&t, 3, 1, &GreedyOptions::default()).unwrap();
    for r in [&exact, &greedy] {
        assert_eq!(r.support.lags(), &[2]);
        assert_eq!(r.global_coeffs, vec![1.0]);
        assert_eq!(r.objective, 0.0);
    }
}

#[test]
fn greedy_usually_matches_exact() {
    let mut matched = 0;
    let mut worst = 1.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series: Vec<Vec<f64>> = (0..6).map(|_| random_counts(&mut rng, 40, 20)).map(|s| s.iter().map(|&v| v as f64).collect()).collect();
        let p = SelectionProblem::from_series(&series, 8).unwrap();
        let e = p.select_exact(3, &ExactOptions::default()).unwrap();
        let g = p.select_greedy(3, &GreedyOptions::default()).unwrap();
        assert!(g.objective >= e.objective * (1.0 - 1e-12), "seed {seed}");
        worst = worst.max(g.objective / e.objective);
        if g.support == e.support {
            matched += 1;
        }
    }
    eprintln!("greedy matched exact on {matched}/100, worst ratio {worst}");
    assert!(matched >= 90, "only {matched} of 100");
}

#[test]
fn two_stage_is_bounded_by_joint_optimum() {
    for seed in 0..10u64 {
        let series = random_instance(50 + seed, 3, 25);
        let xs = as_f64(&series);
        let joint = joint_oracle(&xs, 5, 2);
        let r = SelectionProblem::from_series(&xs, 5)
            .unwrap()
            .select_exact(2, &ExactOptions::default())
            .unwrap();
        let per_series: f64 = xs
            .iter()
            .map(|x| simplex_fit_oracle(std::slice::from_ref(x), 5, r.support.lags()).1)
            .sum();
        assert!(joint <= per_series * (1.0 + 1e-10));
        assert!(per_series <= r.objective * (1.0 + 1e-10));
    }
}

#[test]
fn evaluate_matches_face_oracle() {
    let series = random_instance(9, 3, 35);
    let xs = as_f64(&series);
    let t = tensor_of(series);
    for lags in [vec![1], vec![2, 5], vec![1, 3, 7]] {
        let (w, obj) = evaluate_support(&t, 7, &SupportSet::new(lags.clone()).unwrap()).unwrap();
        let (wo, oo) = simplex_fit_oracle(&xs, 7, &lags);
        assert!(close(obj, oo, 1e-10));
        for (a, b) in w.iter().zip(&wo) {
            assert!((a - b).abs() < 1e-7, "{w:?} vs {wo:?}");
        }
    }
}

#[test]
fn short_series_are_skipped() {
    let t = MobilityTensor::new(
        vec!["a".into(), "b".into()],
        vec!["long".into(), "short".into()],
        vec![
            vec![Some((0..30).map(|t| t % 3).collect()), Some(vec![1, 2, 3])],
            vec![Some((0..30).map(|t| (t * 7) % 5).collect()), Some(vec![4, 5, 6])],
        ],
        "1h",
    )
    .unwrap();
    let p = SelectionProblem::from_tensor(&t, 4).unwrap();
    assert_eq!(p.series_count(), 2);
    assert_eq!(p.skipped(), 2);
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
    (1usize..=3, 20usize..=36, 2usize..=7).prop_flat_map(|(n, len, d)| {
        (
            prop::collection::vec(prop::collection::vec(0u32..30, len), n)
                .prop_map(|s| s.into_iter().map(|x| x.into_iter().map(f64::from).collect()).collect()),
            Just(d),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn objective_never_increases_with_sparsity((series, d) in instance()) {
        let p = SelectionProblem::from_series(&series, d).unwrap();
        let mut prev = f64::INFINITY;
        for tau in 1..=3 {
            let r = p.select_exact(tau, &ExactOptions::default()).unwrap();
            prop_assert!(r.objective <= prev + 1e-9 * prev.abs().max(1.0));
            prop_assert!(r.support.len() <= tau);
            prev = r.objective;
        }
    }

    #[test]
    fn exact_never_worse_than_greedy((series, d) in instance(), tau in 1usize..=3) {
        let p = SelectionProblem::from_series(&series, d).unwrap();
        let e = p.select_exact(tau, &ExactOptions::default()).unwrap();
        let g = p.select_greedy(tau, &GreedyOptions::default()).unwrap();
        prop_assert!(e.objective <= g.objective + 1e-10 * g.objective.abs().max(1.0));
    }

    #[test]
    fn selected_coefficients_lie_on_the_simplex((series, d) in instance(), tau in 1usize..=3) {
        let p = SelectionProblem::from_series(&series, d).unwrap();
        let r = p.select_greedy(tau, &GreedyOptions::default()).unwrap();
        prop_assert!(r.global_coeffs.iter().all(|&w| w >= 0.0));
        prop_assert!((r.global_coeffs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let direct = common::pooled_sse(&series, d, r.support.lags(), &r.global_coeffs);
        prop_assert!(close(direct, r.objective, 1e-10));
    }
}
