//! Least squares over the probability simplex.
//!
//! Minimizes `c - 2 b'w + w'Qw` subject to `w >= 0`, `sum(w) = 1`, where
//! `Q` is a (centered) Gram matrix and therefore positive semidefinite.
//!
//! The primary method is a primal active-set iteration. The free set `F`
//! holds the coordinates allowed to be nonzero; each iteration minimizes the
//! objective on the affine hull of face `F` and either steps to that minimizer
//! (dropping coordinates that would turn negative) or, when it is feasible,
//! checks the multiplier conditions `g_k >= lambda` for the fixed coordinates.
//! Face minimizers are computed through a pseudo-inverse of the reduced
//! Hessian, which returns the minimum-norm point when the face problem is
//! rank deficient. A projected-gradient loop takes over if the active-set
//! iteration exceeds its change budget.

use nalgebra::{DMatrix, DVector};

/// `c - 2 b'w + w'Qw` in dense row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub dim: usize,
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl QuadraticForm {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            q: vec![0.0; dim * dim],
            b: vec![0.0; dim],
            c: 0.0,
        }
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        let m = self.dim;
        let mut quad = 0.0;
        for i in 0..m {
            if w[i] == 0.0 {
                continue;
            }
            let row = &self.q[i * m..(i + 1) * m];
            quad += w[i] * row.iter().zip(w).map(|(q, w)| q * w).sum::<f64>();
        }
        self.c - 2.0 * self.b.iter().zip(w).map(|(b, w)| b * w).sum::<f64>() + quad
    }

    /// Half gradient `Qw - b`.
    pub fn half_gradient(&self, w: &[f64]) -> Vec<f64> {
        let m = self.dim;
        (0..m)
            .map(|i| {
                let row = &self.q[i * m..(i + 1) * m];
                row.iter().zip(w).map(|(q, w)| q * w).sum::<f64>() - self.b[i]
            })
            .collect()
    }

    /// Magnitude used to make tolerances scale-free.
    pub fn scale(&self) -> f64 {
        1.0 + self.c.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Relative KKT tolerance; the absolute tolerance is `kkt_tol * (1 + ||y||^2)`.
    pub kkt_tol: f64,
    /// Active-set changes allowed before falling back; `None` means `10 m^2`.
    pub max_active_changes: Option<usize>,
    pub max_gradient_iters: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            max_active_changes: None,
            max_gradient_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    /// Largest stationarity or complementarity violation of the full gradient,
    /// divided by `1 + ||y||^2`.
    pub kkt_residual: f64,
    /// A face system was rank deficient and solved in the minimum-norm sense.
    pub rank_deficient: bool,
    /// The projected-gradient fallback produced the result.
    pub used_fallback: bool,
    pub iterations: usize,
}

// Violations below this fraction of the problem scale are rounding noise.
const ADD_TOL: f64 = 1e-12;
// Multipliers this close to the shared one mark a possibly non-unique optimum.
const DEGENERATE_TOL: f64 = 1e-9;
// Relative eigenvalue cutoff for the reduced Hessian pseudo-inverse.
const EIGEN_CUTOFF: f64 = 1e-10;

/// Solves the simplex-constrained problem. `warm` seeds the free set with the
/// support of the given point.
pub fn solve_simplex_qp(
    form: &QuadraticForm,
    warm: Option<&[f64]>,
    opts: &SimplexOptions,
) -> QpSolution {
    let m = form.dim;
    assert!(m > 0, "simplex QP needs at least one coordinate");
    if m == 1 {
        let w = vec![1.0];
        return finish(form, w, false, false, 0);
    }
    let scale = form.scale();
    let add_tol = ADD_TOL * scale;

    let mut w = match warm {
        Some(w0) if w0.len() == m => project_to_simplex(w0),
        _ => {
            // best vertex: objective at e_k is c - 2 b_k + Q_kk
            let k = (0..m)
                .map(|k| (k, form.q[k * m + k] - 2.0 * form.b[k]))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
                .0;
            let mut w = vec![0.0; m];
            w[k] = 1.0;
            w
        }
    };
    let mut free: Vec<bool> = w.iter().map(|&v| v > 0.0).collect();
    let budget = opts.max_active_changes.unwrap_or(10 * m * m);
    let mut rank_deficient = false;
    let mut changes = 0usize;
    let mut converged = false;

    while changes <= budget {
        let idx: Vec<usize> = (0..m).filter(|&k| free[k]).collect();
        let (p, deficient) = face_minimizer(form, &idx);
        rank_deficient |= deficient;
        if idx.iter().all(|&k| p[k] >= 0.0) {
            w = p;
            let g = form.half_gradient(&w);
            let lambda = idx.iter().map(|&k| g[k]).sum::<f64>() / idx.len() as f64;
            let entering = (0..m)
                .filter(|&k| !free[k])
                .map(|k| (k, g[k] - lambda))
                .fold(None, |best: Option<(usize, f64)>, cur| match best {
                    Some(b) if b.1 <= cur.1 => Some(b),
                    _ => Some(cur),
                });
            match entering {
                Some((k, v)) if v < -add_tol => {
                    free[k] = true;
                    changes += 1;
                }
                _ => {
                    converged = true;
                    break;
                }
            }
        } else {
            // step toward p until the first free coordinate hits zero
            let mut alpha = 1.0;
            let mut blocking = idx[0];
            for &k in &idx {
                if p[k] < 0.0 {
                    let a = w[k] / (w[k] - p[k]);
                    if a < alpha {
                        alpha = a;
                        blocking = k;
                    }
                }
            }
            for &k in &idx {
                w[k] += alpha * (p[k] - w[k]);
            }
            w[blocking] = 0.0;
            free[blocking] = false;
            for &k in &idx {
                if w[k] <= 0.0 {
                    w[k] = 0.0;
                    free[k] = false;
                }
            }
            changes += 1;
        }
    }

    if converged {
        if let Some(p) = min_norm_expansion(form, &w, opts) {
            // a tied face means the minimizer was not unique
            w = p;
            rank_deficient = true;
        }
        let sol = finish(form, w.clone(), rank_deficient, false, changes);
        if sol.kkt_residual <= opts.kkt_tol {
            return sol;
        }
    }
    let w = projected_gradient(form, &w, opts);
    finish(form, w, rank_deficient, true, changes)
}

/// Minimizer of the objective over the affine hull of face `idx`, as a full
/// vector with zeros outside the face. Returns whether the face system was
/// rank deficient.
fn face_minimizer(form: &QuadraticForm, idx: &[usize]) -> (Vec<f64>, bool) {
    let m = form.dim;
    let r = idx.len();
    let mut p = vec![0.0; m];
    if r == 1 {
        p[idx[0]] = 1.0;
        return (p, false);
    }
    let qf = DMatrix::from_fn(r, r, |i, j| form.q[idx[i] * m + idx[j]]);
    let bf = DVector::from_iterator(r, idx.iter().map(|&k| form.b[k]));
    let w0 = DVector::from_element(r, 1.0 / r as f64);
    let g0 = &qf * &w0 - bf;
    // projector onto the sum-zero subspace
    let proj = DMatrix::identity(r, r) - DMatrix::from_element(r, r, 1.0 / r as f64);
    let h = &proj * &qf * &proj;
    let h = (&h + h.transpose()) * 0.5;
    let rhs = -(&proj * g0);
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = EIGEN_CUTOFF * top;
    let mut v = DVector::zeros(r);
    let mut truncated = 0;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff && lam > 0.0 {
            let u = eig.eigenvectors.column(i);
            v += u * (u.dot(&rhs) / lam);
        } else {
            truncated += 1;
        }
    }
    let shift = v.sum() / r as f64;
    for (i, &k) in idx.iter().enumerate() {
        p[k] = w0[i] + v[i] - shift;
    }
    // one truncated direction is always the all-ones vector
    (p, truncated > 1)
}

/// When fixed coordinates carry multipliers equal to the shared one, the
/// optimum may not be unique; try the larger face and keep its minimizer if it
/// is feasible, no worse, and strictly smaller in norm.
fn min_norm_expansion(form: &QuadraticForm, w: &[f64], opts: &SimplexOptions) -> Option<Vec<f64>> {
    let m = form.dim;
    let scale = form.scale();
    let g = form.half_gradient(w);
    let free: Vec<usize> = (0..m).filter(|&k| w[k] > 0.0).collect();
    let lambda = free.iter().map(|&k| g[k]).sum::<f64>() / free.len() as f64;
    let tied: Vec<usize> = (0..m)
        .filter(|&k| w[k] == 0.0 && g[k] - lambda <= DEGENERATE_TOL * scale)
        .collect();
    if tied.is_empty() {
        return None;
    }
    let mut idx = free.clone();
    idx.extend(tied);
    idx.sort_unstable();
    let (p, _) = face_minimizer(form, &idx);
    if idx.iter().any(|&k| p[k] < -1e-12) {
        return None;
    }
    let p = clean(p);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let no_worse = form.objective(&p) <= form.objective(w) + 1e-12 * scale;
    if no_worse && norm(&p) < norm(w) - 1e-9 && kkt_residual(form, &p) <= opts.kkt_tol {
        Some(p)
    } else {
        None
    }
}

fn projected_gradient(form: &QuadraticForm, start: &[f64], opts: &SimplexOptions) -> Vec<f64> {
    let m = form.dim;
    let q = DMatrix::from_row_slice(m, m, &form.q);
    let top = q.symmetric_eigen().eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut w = project_to_simplex(start);
    if top <= 0.0 {
        return vec![1.0 / m as f64; m];
    }
    let step = 1.0 / (2.0 * top);
    for _ in 0..opts.max_gradient_iters {
        if kkt_residual(form, &w) <= opts.kkt_tol {
            break;
        }
        let g = form.half_gradient(&w);
        let trial: Vec<f64> = w.iter().zip(&g).map(|(w, g)| w - step * 2.0 * g).collect();
        w = project_to_simplex(&trial);
    }
    w
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Relative KKT residual of the full gradient at a simplex point.
pub fn kkt_residual(form: &QuadraticForm, w: &[f64]) -> f64 {
    let g = form.half_gradient(w);
    let free: Vec<usize> = (0..form.dim).filter(|&k| w[k] > 0.0).collect();
    if free.is_empty() {
        return f64::INFINITY;
    }
    let lambda = free.iter().map(|&k| g[k]).sum::<f64>() / free.len() as f64;
    let mut worst = 0.0f64;
    for k in 0..form.dim {
        let v = if w[k] > 0.0 {
            (g[k] - lambda).abs()
        } else {
            (lambda - g[k]).max(0.0)
        };
        worst = worst.max(v);
    }
    2.0 * worst / form.scale()
}

/// Clamps negatives to zero and renormalizes onto the simplex.
fn clean(mut w: Vec<f64>) -> Vec<f64> {
    for v in w.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = w.iter().sum();
    if s != 1.0 && s > 0.0 {
        for v in w.iter_mut() {
            *v /= s;
        }
    }
    w
}

fn finish(
    form: &QuadraticForm,
    w: Vec<f64>,
    rank_deficient: bool,
    used_fallback: bool,
    iterations: usize,
) -> QpSolution {
    let w = clean(w);
    QpSolution {
        objective: form.objective(&w),
        kkt_residual: kkt_residual(form, &w),
        weights: w,
        rank_deficient,
        used_fallback,
        iterations,
    }
}
