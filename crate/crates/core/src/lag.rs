//! Lagged regression systems and the autoregressive residual.
//!
//! A [`LagSystem`] of order `d` over a series `x[0..T]` has targets
//! `x[d..T]`; the column for lag `k` is `x[d-k..T-k]`. Both are contiguous
//! slices of the series, so nothing is materialized beyond the series itself.

use crate::error::{Error, Result};
use crate::selection::SupportSet;
use crate::simplex::QuadraticForm;

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagSystem {
    values: Vec<f64>,
    order: usize,
}

/// Builds the lagged system of a count series.
pub fn build_lag_system(series: &[u64], order: usize) -> Result<LagSystem> {
    LagSystem::new(series.iter().map(|&v| v as f64).collect(), order)
}

/// Sum of squared one-step residuals for coefficients on `support`.
pub fn residual_sse(system: &LagSystem, support: &SupportSet, coeffs: &[f64]) -> Result<f64> {
    system.residual_sse(support, coeffs)
}

impl LagSystem {
    pub fn new(values: Vec<f64>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("autoregression order must be positive".into()));
        }
        if values.len() <= order {
            return Err(Error::SeriesTooShort {
                len: values.len(),
                order,
            });
        }
        Ok(Self { values, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of regression rows, `T - d`.
    pub fn sample_count(&self) -> usize {
        self.values.len() - self.order
    }

    pub fn series(&self) -> &[f64] {
        &self.values
    }

    pub fn targets(&self) -> &[f64] {
        &self.values[self.order..]
    }

    /// Regressor column for lag `k`; row `i` is `x[d + i - k]`.
    pub fn lag_column(&self, lag: usize) -> Result<&[f64]> {
        if lag == 0 || lag > self.order {
            return Err(Error::LagOutOfRange {
                lag,
                order: self.order,
            });
        }
        let t = self.values.len();
        Ok(&self.values[self.order - lag..t - lag])
    }

    fn check_support(&self, support: &SupportSet) -> Result<()> {
        match support.max_lag() {
            None => Err(Error::EmptySupport),
            Some(max) if max > self.order => Err(Error::LagOutOfRange {
                lag: max,
                order: self.order,
            }),
            Some(_) => Ok(()),
        }
    }

    pub fn residual_sse(&self, support: &SupportSet, coeffs: &[f64]) -> Result<f64> {
        if coeffs.len() != support.len() {
            return Err(Error::CoefficientMismatch(format!(
                "{} coefficients for a support of {} lags",
                coeffs.len(),
                support.len()
            )));
        }
        self.check_support(support)?;
        let columns: Vec<&[f64]> = support
            .lags()
            .iter()
            .map(|&k| self.lag_column(k))
            .collect::<Result<_>>()?;
        let sse = self
            .targets()
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let pred: f64 = columns.iter().zip(coeffs).map(|(c, w)| w * c[i]).sum();
                let r = y - pred;
                r * r
            })
            .collect::<CompensatedSum>();
        Ok(sse.value())
    }

    /// Series mean used to center the quadratic forms.
    ///
    /// Subtracting any per-series constant leaves every residual unchanged
    /// when the coefficients sum to one, so centering only improves
    /// conditioning.
    fn center(&self) -> f64 {
        self.values.iter().copied().collect::<CompensatedSum>().value() / self.values.len() as f64
    }

    fn centered(&self) -> Vec<f64> {
        let m = self.center();
        self.values.iter().map(|v| v - m).collect()
    }

    /// Centered quadratic form for the given lags, by direct summation.
    pub(crate) fn quadratic_form(&self, lags: &[usize]) -> Result<QuadraticForm> {
        if let Some(&bad) = lags.iter().find(|&&k| k == 0 || k > self.order) {
            return Err(Error::LagOutOfRange {
                lag: bad,
                order: self.order,
            });
        }
        let z = self.centered();
        let d = self.order;
        let n = self.sample_count();
        let col = |k: usize| &z[d - k..d - k + n];
        let y = &z[d..];
        let m = lags.len();
        let mut form = QuadraticForm::zeros(m);
        form.c = dot(y, y);
        for (a, &j) in lags.iter().enumerate() {
            form.b[a] = dot(y, col(j));
            for (bidx, &k) in lags.iter().enumerate().skip(a) {
                let v = dot(col(j), col(k));
                form.q[a * m + bidx] = v;
                form.q[bidx * m + a] = v;
            }
        }
        Ok(form)
    }

    /// Centered Gram matrix over lags `0..=d` (lag 0 is the target column).
    ///
    /// The first row is summed directly; every other entry follows from the
    /// shift identity `G[j+1][k+1] = G[j][k] + z[d-1-j] z[d-1-k] - z[T-1-j] z[T-1-k]`,
    /// which costs `O(T d + d^2)` instead of `O(T d^2)`.
    pub(crate) fn lag_gram(&self) -> LagGram {
        let z = self.centered();
        let d = self.order;
        let t = z.len();
        let n = t - d;
        let dim = d + 1;
        let mut g = vec![0.0; dim * dim];
        let y = &z[d..];
        for off in 0..=d {
            let mut val = dot(y, &z[d - off..d - off + n]);
            g[off] = val;
            g[off * dim] = val;
            for j in 0..d - off {
                let k = j + off;
                val += z[d - 1 - j] * z[d - 1 - k] - z[t - 1 - j] * z[t - 1 - k];
                g[(j + 1) * dim + (k + 1)] = val;
                g[(k + 1) * dim + (j + 1)] = val;
            }
        }
        LagGram { dim, g }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric `(d+1) x (d+1)` Gram matrix over lags `0..=d`, possibly pooled
/// over many series.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LagGram {
    dim: usize,
    g: Vec<f64>,
}

impl LagGram {
    pub(crate) fn zeros(order: usize) -> Self {
        let dim = order + 1;
        Self {
            dim,
            g: vec![0.0; dim * dim],
        }
    }

    pub(crate) fn accumulate(&mut self, other: &LagGram) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a += b;
        }
    }

    /// Sum of squared centered targets.
    pub(crate) fn target_energy(&self) -> f64 {
        self.g[0]
    }

    pub(crate) fn restrict(&self, lags: &[usize]) -> QuadraticForm {
        let m = lags.len();
        let mut form = QuadraticForm::zeros(m);
        form.c = self.g[0];
        for (a, &j) in lags.iter().enumerate() {
            form.b[a] = self.g[j];
            for (bidx, &k) in lags.iter().enumerate() {
                form.q[a * m + bidx] = self.g[j * self.dim + k];
            }
        }
        form
    }
}
