//! Global support selection.
//!
//! All usable series are pooled into one least-squares problem with a single
//! shared coefficient vector on the simplex. The selected support is the lag
//! set of size at most `tau` minimizing the pooled residual.
//!
//! Candidate supports are compared through the pooled centered Gram matrix,
//! which is built once. The reported objective is recomputed by direct
//! residual summation over every series.

mod exact;
mod greedy;

pub use exact::ExactOptions;
pub use greedy::GreedyOptions;

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lag::{CompensatedSum, LagGram, LagSystem};
use crate::simplex::{solve_simplex_qp, QpSolution, QuadraticForm, SimplexOptions};
use crate::tensor::MobilityTensor;

/// Strictly increasing set of lags, each at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    /// Sorts the lags; rejects zero and duplicates.
    pub fn new(mut lags: Vec<usize>) -> Result<Self> {
        lags.sort_unstable();
        if lags.first() == Some(&0) {
            return Err(Error::InvalidSupport("lag 0 is not a valid lag".into()));
        }
        if let Some(w) = lags.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSupport(format!("duplicate lag {}", w[0])));
        }
        Ok(Self(lags))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn lags(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_lag(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn contains(&self, lag: usize) -> bool {
        self.0.binary_search(&lag).is_ok()
    }

    pub fn position(&self, lag: usize) -> Option<usize> {
        self.0.binary_search(&lag).ok()
    }
}

impl TryFrom<Vec<usize>> for SupportSet {
    type Error = Error;

    fn try_from(lags: Vec<usize>) -> Result<Self> {
        SupportSet::new(lags)
    }
}

impl From<SupportSet> for Vec<usize> {
    fn from(s: SupportSet) -> Self {
        s.0
    }
}

impl fmt::Display for SupportSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Exact,
    #[default]
    Greedy,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Exact => "exact",
            Solver::Greedy => "greedy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimality {
    Exact,
    Heuristic,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub candidate: SupportSet,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub support: SupportSet,
    /// Shared coefficients aligned with `support.lags()`.
    pub global_coeffs: Vec<f64>,
    /// Total residual sum of squares over all usable series.
    pub objective: f64,
    pub optimality: Optimality,
    pub solver: Solver,
    pub trace: Vec<TraceEntry>,
    /// Quadratic programs solved during the search.
    pub nodes: u64,
    pub series_used: usize,
    /// Selection stopped below `tau` because no lag improved the fit.
    pub stopped_early: bool,
}

impl SelectionResult {
    pub fn coefficient(&self, lag: usize) -> Option<f64> {
        self.support.position(lag).map(|i| self.global_coeffs[i])
    }

    /// Writes the trace as `iteration,candidate,objective`, with candidate
    /// lags separated by semicolons.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(["iteration", "candidate", "objective"]).map_err(err)?;
        for t in &self.trace {
            let cand = t
                .candidate
                .lags()
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([t.iteration.to_string(), cand, t.objective.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Tie and improvement tolerances for comparing pooled objectives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Comparator {
    tie_rel: f64,
    floor: f64,
}

// Gram-based objectives carry rounding noise proportional to the target energy.
const NOISE_FLOOR: f64 = 1e-12;

impl Comparator {
    pub(crate) fn new(tie_rel: f64, scale: f64) -> Self {
        Self {
            tie_rel,
            floor: NOISE_FLOOR * scale,
        }
    }

    pub(crate) fn tol(&self, a: f64, b: f64) -> f64 {
        self.tie_rel * a.abs().max(b.abs()) + self.floor
    }

    pub(crate) fn ties(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.tol(a, b)
    }

    /// `candidate` beats `current` by more than `rel` (plus the noise floor).
    pub(crate) fn improves(&self, candidate: f64, current: f64, rel: f64) -> bool {
        current - candidate > rel * current.abs() + self.floor
    }
}

/// Pooled support-selection problem over every usable series.
#[derive(Debug, Clone)]
pub struct SelectionProblem {
    order: usize,
    systems: Vec<LagSystem>,
    gram: LagGram,
    skipped: usize,
}

// Series are pooled in fixed-size chunks so the reduction order does not
// depend on the thread count.
const POOL_CHUNK: usize = 16;

impl SelectionProblem {
    /// Pools every non-missing series of the tensor. Series not longer than
    /// `order` are skipped with a warning.
    pub fn from_tensor(tensor: &MobilityTensor, order: usize) -> Result<Self> {
        let mut systems = Vec::new();
        let mut skipped = 0;
        for (key, series) in tensor.present() {
            match crate::lag::build_lag_system(series, order) {
                Ok(s) => systems.push(s),
                Err(Error::SeriesTooShort { len, .. }) => {
                    log::warn!(
                        "skipping series {} (length {len} <= order {order})",
                        tensor.series_label(key)
                    );
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Self::from_systems(systems, order, skipped)
    }

    /// Pools real-valued series directly (no integrality requirement).
    pub fn from_series(series: &[Vec<f64>], order: usize) -> Result<Self> {
        let systems = series
            .iter()
            .map(|s| LagSystem::new(s.clone(), order))
            .collect::<Result<Vec<_>>>()?;
        Self::from_systems(systems, order, 0)
    }

    fn from_systems(systems: Vec<LagSystem>, order: usize, skipped: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("autoregression order must be positive".into()));
        }
        if systems.is_empty() {
            return Err(Error::NoUsableSeries { order });
        }
        let partial: Vec<LagGram> = systems
            .par_chunks(POOL_CHUNK)
            .map(|chunk| {
                let mut g = LagGram::zeros(order);
                for s in chunk {
                    g.accumulate(&s.lag_gram());
                }
                g
            })
            .collect();
        let mut gram = LagGram::zeros(order);
        for g in &partial {
            gram.accumulate(g);
        }
        Ok(Self {
            order,
            systems,
            gram,
            skipped,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn series_count(&self) -> usize {
        self.systems.len()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub(crate) fn scale(&self) -> f64 {
        1.0 + self.gram.target_energy()
    }

    pub(crate) fn form(&self, lags: &[usize]) -> QuadraticForm {
        self.gram.restrict(lags)
    }

    pub(crate) fn fit_lags(&self, lags: &[usize], opts: &SimplexOptions) -> QpSolution {
        solve_simplex_qp(&self.form(lags), None, opts)
    }

    fn check(&self, support: &SupportSet) -> Result<()> {
        match support.max_lag() {
            None => Err(Error::EmptySupport),
            Some(k) if k > self.order => Err(Error::LagOutOfRange {
                lag: k,
                order: self.order,
            }),
            Some(_) => Ok(()),
        }
    }

    /// Total residual over all series, summed in canonical order.
    pub fn direct_objective(&self, support: &SupportSet, coeffs: &[f64]) -> Result<f64> {
        self.check(support)?;
        let parts = self
            .systems
            .par_iter()
            .map(|s| s.residual_sse(support, coeffs))
            .collect::<Result<Vec<f64>>>()?;
        Ok(parts.into_iter().collect::<CompensatedSum>().value())
    }

    /// Shared simplex fit on a fixed support: `(coefficients, objective)`.
    pub fn evaluate(&self, support: &SupportSet) -> Result<(Vec<f64>, f64)> {
        self.evaluate_with(support, &SimplexOptions::default())
    }

    pub fn evaluate_with(&self, support: &SupportSet, opts: &SimplexOptions) -> Result<(Vec<f64>, f64)> {
        self.check(support)?;
        let sol = self.fit_lags(support.lags(), opts);
        let objective = self.direct_objective(support, &sol.weights)?;
        Ok((sol.weights, objective))
    }

    fn validate_tau(&self, tau: usize) -> Result<()> {
        if tau == 0 {
            return Err(Error::Config("sparsity must be at least 1".into()));
        }
        Ok(())
    }

    pub fn select_exact(&self, tau: usize, opts: &ExactOptions) -> Result<SelectionResult> {
        self.validate_tau(tau)?;
        exact::select(self, tau, opts)
    }

    pub fn select_greedy(&self, tau: usize, opts: &GreedyOptions) -> Result<SelectionResult> {
        self.validate_tau(tau)?;
        greedy::select(self, tau, opts)
    }

    pub(crate) fn finalize(
        &self,
        lags: Vec<usize>,
        weights: Vec<f64>,
        optimality: Optimality,
        solver: Solver,
        trace: Vec<TraceEntry>,
        nodes: u64,
        stopped_early: bool,
    ) -> Result<SelectionResult> {
        let support = SupportSet::new(lags)?;
        let objective = self.direct_objective(&support, &weights)?;
        Ok(SelectionResult {
            support,
            global_coeffs: weights,
            objective,
            optimality,
            solver,
            trace,
            nodes,
            series_used: self.systems.len(),
            stopped_early,
        })
    }
}

pub fn select_support_exact(
    tensor: &MobilityTensor,
    order: usize,
    tau: usize,
    opts: &ExactOptions,
) -> Result<SelectionResult> {
    SelectionProblem::from_tensor(tensor, order)?.select_exact(tau, opts)
}

pub fn select_support_greedy(
    tensor: &MobilityTensor,
    order: usize,
    tau: usize,
    opts: &GreedyOptions,
) -> Result<SelectionResult> {
    SelectionProblem::from_tensor(tensor, order)?.select_greedy(tau, opts)
}

/// Shared simplex fit pooling every series on a fixed support.
pub fn evaluate_support(
    tensor: &MobilityTensor,
    order: usize,
    support: &SupportSet,
) -> Result<(Vec<f64>, f64)> {
    SelectionProblem::from_tensor(tensor, order)?.evaluate(support)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(series: Vec<Vec<u64>>) -> MobilityTensor {
        let n = series.len();
        MobilityTensor::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec!["v".into()],
            series.into_iter().map(|s| vec![Some(s)]).collect(),
            "1h",
        )
        .unwrap()
    }

    #[test]
    fn support_set_validation() {
        assert_eq!(SupportSet::new(vec![24, 1, 168]).unwrap().lags(), &[1, 24, 168]);
        assert!(SupportSet::new(vec![0, 1]).is_err());
        assert!(SupportSet::new(vec![3, 3]).is_err());
        let s: SupportSet = serde_json::from_str("[168, 1]").unwrap();
        assert_eq!(s.to_string(), "{1,168}");
        assert!(serde_json::from_str::<SupportSet>("[2, 2]").is_err());
    }

    #[test]
    fn evaluate_single_lag_by_hand() {
        let t = tensor(vec![vec![1, 2, 3, 4, 5]]);
        let (w, obj) = evaluate_support(&t, 2, &SupportSet::new(vec![1]).unwrap()).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(obj, 3.0);
    }

    #[test]
    fn evaluate_constant_tensor_is_uniform() {
        let t = tensor(vec![vec![4; 30], vec![11; 30]]);
        let (w, obj) = evaluate_support(&t, 6, &SupportSet::new(vec![1, 3, 6]).unwrap()).unwrap();
        assert_eq!(obj, 0.0);
        for v in w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn period_two_selected_by_both_solvers() {
        let series: Vec<u64> = (0..20).map(|t| if t % 2 == 0 { 4 } else { 9 }).collect();
        let t = tensor(vec![series]);
        let exact = select_support_exact(&t, 3, 1, &ExactOptions::default()).unwrap();
        let greedy = select_support_greedy(&t, 3, 1, &GreedyOptions::default()).unwrap();
        for r in [&exact, &greedy] {
            assert_eq!(r.support.lags(), &[2]);
            assert_eq!(r.global_coeffs, vec![1.0]);
            assert_eq!(r.objective, 0.0);
        }
        assert_eq!(exact.optimality, Optimality::Exact);
        assert_eq!(greedy.optimality, Optimality::Heuristic);
    }

    #[test]
    fn zero_residual_prefers_smaller_support() {
        let series: Vec<u64> = (0..20).map(|t| if t % 2 == 0 { 4 } else { 9 }).collect();
        let t = tensor(vec![series]);
        let exact = select_support_exact(&t, 3, 3, &ExactOptions::default()).unwrap();
        assert_eq!(exact.support.lags(), &[2]);
        let greedy = select_support_greedy(&t, 3, 3, &GreedyOptions::default()).unwrap();
        assert_eq!(greedy.support.lags(), &[2]);
        assert!(greedy.stopped_early);
    }

    #[test]
    fn no_usable_series() {
        let t = tensor(vec![vec![1, 2, 3]]);
        assert!(matches!(
            select_support_greedy(&t, 5, 2, &GreedyOptions::default()),
            Err(Error::NoUsableSeries { order: 5 })
        ));
    }

    #[test]
    fn trace_csv_format() {
        let series: Vec<u64> = (0..20).map(|t| if t % 2 == 0 { 4 } else { 9 }).collect();
        let r = select_support_greedy(&tensor(vec![series]), 3, 1, &GreedyOptions::default()).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,candidate,objective\n"));
        assert!(text.contains(",2,"));
    }
}
