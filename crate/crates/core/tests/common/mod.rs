//! Brute-force reference implementations used as test oracles.
//!
//! Nothing here shares code with the library's solvers: residuals are summed
//! row by row from the raw series, and the simplex QP is solved by trying
//! every face of the support with a pseudo-inverse KKT solve.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Sum over series of `sum_{t=d}^{T-1} (x_t - sum_k w_k x_{t-k})^2`.
pub fn pooled_sse(series: &[Vec<f64>], d: usize, lags: &[usize], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for x in series {
        for t in d..x.len() {
            let pred: f64 = lags.iter().zip(w).map(|(&k, &wk)| wk * x[t - k]).sum();
            let r = x[t] - pred;
            total += r * r;
        }
    }
    total
}

/// Normal-equation blocks `A = X'X` and `v = X'y` over all rows of all series.
fn normal_equations(series: &[Vec<f64>], d: usize, lags: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let m = lags.len();
    let mut a = DMatrix::zeros(m, m);
    let mut v = DVector::zeros(m);
    for x in series {
        for t in d..x.len() {
            for i in 0..m {
                v[i] += x[t - lags[i]] * x[t];
                for j in 0..m {
                    a[(i, j)] += x[t - lags[i]] * x[t - lags[j]];
                }
            }
        }
    }
    (a, v)
}

/// Minimizes the pooled SSE over the simplex on `lags` by enumerating faces.
/// Returns weights aligned with `lags` and the directly summed objective.
pub fn simplex_fit_oracle(series: &[Vec<f64>], d: usize, lags: &[usize]) -> (Vec<f64>, f64) {
    let m = lags.len();
    let (a, v) = normal_equations(series, d, lags);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 1u32..(1 << m) {
        let face: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let r = face.len();
        // [2A/s 1; 1' 0] [w; mu] = [2v/s; 1], with s keeping the blocks balanced
        let s = face.iter().map(|&f| a[(f, f)]).sum::<f64>() / r as f64;
        let s = if s > 0.0 { s } else { 1.0 };
        let mut k = DMatrix::zeros(r + 1, r + 1);
        let mut rhs = DVector::zeros(r + 1);
        for (i, &fi) in face.iter().enumerate() {
            for (j, &fj) in face.iter().enumerate() {
                k[(i, j)] = 2.0 * a[(fi, fj)] / s;
            }
            k[(i, r)] = 1.0;
            k[(r, i)] = 1.0;
            rhs[i] = 2.0 * v[fi] / s;
        }
        rhs[r] = 1.0;
        let Ok(sol) = k.clone().svd(true, true).solve(&rhs, 1e-12) else {
            continue;
        };
        let resid = (&k * &sol - &rhs).norm();
        if resid > 1e-8 * (1.0 + rhs.norm() + k.norm() * sol.norm()) {
            continue;
        }
        let mut w = vec![0.0; m];
        for (i, &fi) in face.iter().enumerate() {
            w[fi] = sol[i];
        }
        let sum: f64 = w.iter().sum();
        if w.iter().any(|&x| x < -1e-9) || (sum - 1.0).abs() > 1e-6 {
            continue;
        }
        for x in &mut w {
            *x = x.max(0.0);
        }
        let s: f64 = w.iter().sum();
        for x in &mut w {
            *x /= s;
        }
        let obj = pooled_sse(series, d, lags, &w);
        if best.as_ref().is_none_or(|b| obj < b.1) {
            best = Some((w, obj));
        }
    }
    best.expect("some face is feasible")
}

/// All supports of size 1..=tau drawn from 1..=d, in lexicographic order.
pub fn all_supports(d: usize, tau: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, tau: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for j in start..=d {
            cur.push(j);
            out.push(cur.clone());
            if cur.len() < tau {
                rec(j + 1, d, tau, cur, out);
            }
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, d, tau, &mut Vec::new(), &mut out);
    out
}

/// Best support by full enumeration. Objectives within `tie_rel` are tied and
/// resolved by fewer lags, then lexicographic order.
pub fn best_support_oracle(series: &[Vec<f64>], d: usize, tau: usize, tie_rel: f64) -> (Vec<usize>, f64) {
    let fits: Vec<(Vec<usize>, f64)> = all_supports(d, tau)
        .into_iter()
        .map(|s| {
            let (_, obj) = simplex_fit_oracle(series, d, &s);
            (s, obj)
        })
        .collect();
    let min = fits.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let tol = tie_rel * min.abs().max(1.0);
    fits.into_iter()
        .filter(|f| f.1 <= min + tol)
        .min_by(|a, b| a.0.len().cmp(&b.0.len()).then(a.0.cmp(&b.0)))
        .unwrap()
}

/// Grid search over the simplex on `m <= 3` coordinates with the given step.
pub fn simplex_grid_oracle(series: &[Vec<f64>], d: usize, lags: &[usize], step: f64) -> f64 {
    let m = lags.len();
    let (a, v) = normal_equations(series, d, lags);
    let yy: f64 = series
        .iter()
        .map(|x| x[d..].iter().map(|y| y * y).sum::<f64>())
        .sum();
    let obj = |w: &[f64]| {
        let mut q = yy;
        for i in 0..m {
            q -= 2.0 * w[i] * v[i];
            for j in 0..m {
                q += w[i] * w[j] * a[(i, j)];
            }
        }
        q
    };
    let n = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    match m {
        1 => best = obj(&[1.0]),
        2 => {
            for i in 0..=n {
                let a0 = i as f64 / n as f64;
                best = best.min(obj(&[a0, 1.0 - a0]));
            }
        }
        3 => {
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let a0 = i as f64 / n as f64;
                    let a1 = j as f64 / n as f64;
                    best = best.min(obj(&[a0, a1, (1.0 - a0 - a1).max(0.0)]));
                }
            }
        }
        _ => panic!("grid oracle supports at most three lags"),
    }
    best
}

/// Solves the joint problem with per-series coefficients: every support is
/// tried and each series fitted on it independently.
pub fn joint_oracle(series: &[Vec<f64>], d: usize, tau: usize) -> f64 {
    all_supports(d, tau)
        .into_iter()
        .map(|s| {
            series
                .iter()
                .map(|x| simplex_fit_oracle(std::slice::from_ref(x), d, &s).1)
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn random_counts<R: Rng>(rng: &mut R, len: usize, max: u64) -> Vec<u64> {
    (0..len).map(|_| rng.random_range(0..=max)).collect()
}

pub fn as_f64(series: &[Vec<u64>]) -> Vec<Vec<f64>> {
    series.iter().map(|s| s.iter().map(|&v| v as f64).collect()).collect()
}
