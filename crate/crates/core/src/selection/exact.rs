//! Depth-first branch and bound over lag subsets.
//!
//! A node is a chosen prefix `C` and the next admissible lag `j`; its subtree
//! holds every support `C ∪ {j} ∪ S` with `S ⊆ {j+1..d}`. The simplex fit on
//! `C ∪ {j..d}` lower-bounds every support in the subtree because each is a
//! subset of it (zero weights are feasible). Bounds are non-decreasing in `j`
//! for a fixed prefix, so once one sibling is pruned the rest are too.
//!
//! Preorder visits supports in lexicographic order, so among equal objectives
//! a later support only wins when it is strictly smaller.

use std::time::{Duration, Instant};

use super::{Comparator, Optimality, SelectionProblem, SelectionResult, Solver, TraceEntry};
use crate::error::{Error, Result};
use crate::selection::SupportSet;
use crate::simplex::SimplexOptions;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Maximum number of quadratic programs (bounds and candidates).
    pub node_budget: u64,
    /// Optional wall-clock limit; makes results timing dependent.
    pub time_limit: Option<Duration>,
    /// Relative tolerance under which two objectives are considered tied.
    pub tie_tol: f64,
    pub simplex: SimplexOptions,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            node_budget: 10_000_000,
            time_limit: None,
            tie_tol: 1e-12,
            simplex: SimplexOptions::default(),
        }
    }
}

struct Incumbent {
    lags: Vec<usize>,
    weights: Vec<f64>,
    objective: f64,
}

struct Search<'a> {
    problem: &'a SelectionProblem,
    tau: usize,
    opts: &'a ExactOptions,
    cmp: Comparator,
    nodes: u64,
    exhausted: bool,
    started: Instant,
    best: Option<Incumbent>,
    trace: Vec<TraceEntry>,
}

impl Search<'_> {
    fn spend(&mut self) -> bool {
        if self.nodes >= self.opts.node_budget
            || self.opts.time_limit.is_some_and(|l| self.started.elapsed() >= l)
        {
            self.exhausted = true;
            return false;
        }
        self.nodes += 1;
        true
    }

    /// Could a support of at least `min_card` lags with objective `>= bound`
    /// replace the incumbent?
    fn can_improve(&self, bound: f64, min_card: usize) -> bool {
        match &self.best {
            None => true,
            Some(inc) => {
                let tol = self.cmp.tol(bound, inc.objective);
                bound < inc.objective - tol
                    || (bound <= inc.objective + tol && min_card < inc.lags.len())
            }
        }
    }

    fn offer(&mut self, lags: &[usize], weights: Vec<f64>, objective: f64) {
        let better = match &self.best {
            None => true,
            Some(inc) => {
                objective < inc.objective - self.cmp.tol(objective, inc.objective)
                    || (self.cmp.ties(objective, inc.objective) && lags.len() < inc.lags.len())
            }
        };
        if better {
            self.trace.push(TraceEntry {
                iteration: self.nodes as usize,
                candidate: SupportSet(lags.to_vec()),
                objective,
            });
            self.best = Some(Incumbent {
                lags: lags.to_vec(),
                weights,
                objective,
            });
        }
    }

    fn branch(&mut self, chosen: &mut Vec<usize>, next: usize) {
        let d = self.problem.order();
        if chosen.len() == self.tau {
            return;
        }
        for j in next..=d {
            let mut relaxed = chosen.clone();
            relaxed.extend(j..=d);
            if !self.spend() {
                return;
            }
            let bound = self.problem.fit_lags(&relaxed, &self.opts.simplex).objective;
            if !self.can_improve(bound, chosen.len() + 1) {
                break;
            }
            chosen.push(j);
            if !self.spend() {
                chosen.pop();
                return;
            }
            let sol = self.problem.fit_lags(chosen, &self.opts.simplex);
            self.offer(chosen, sol.weights, sol.objective);
            self.branch(chosen, j + 1);
            chosen.pop();
            if self.exhausted {
                return;
            }
        }
    }
}

pub(super) fn select(problem: &SelectionProblem, tau: usize, opts: &ExactOptions) -> Result<SelectionResult> {
    let mut search = Search {
        problem,
        tau,
        opts,
        cmp: Comparator::new(opts.tie_tol, problem.scale()),
        nodes: 0,
        exhausted: false,
        started: Instant::now(),
        best: None,
        trace: Vec::new(),
    };
    search.branch(&mut Vec::new(), 1);
    let optimality = if search.exhausted {
        Optimality::BudgetExhausted
    } else {
        Optimality::Exact
    };
    let nodes = search.nodes;
    let trace = std::mem::take(&mut search.trace);
    let inc = search.best.ok_or(Error::BudgetExhausted {
        budget: opts.node_budget,
    })?;
    if optimality == Optimality::BudgetExhausted {
        log::warn!("exact search stopped after {nodes} nodes without proving optimality");
    }
    let stopped_early = inc.lags.len() < tau.min(problem.order());
    problem.finalize(inc.lags, inc.weights, optimality, Solver::Exact, trace, nodes, stopped_early)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> SelectionProblem {
        let a: Vec<f64> = (0..30).map(|t| ((t * 13 + 5) % 17) as f64).collect();
        let b: Vec<f64> = (0..30).map(|t| ((t * 7 + 2) % 11) as f64 * 2.0).collect();
        SelectionProblem::from_series(&[a, b], 5).unwrap()
    }

    #[test]
    fn tiny_budget_reports_exhaustion() {
        let opts = ExactOptions {
            node_budget: 3,
            ..Default::default()
        };
        let r = problem().select_exact(2, &opts).unwrap();
        assert_eq!(r.optimality, Optimality::BudgetExhausted);
        assert!(r.nodes <= 3);
    }

    #[test]
    fn zero_budget_is_an_error() {
        let opts = ExactOptions {
            node_budget: 0,
            ..Default::default()
        };
        assert!(matches!(
            problem().select_exact(2, &opts),
            Err(Error::BudgetExhausted { budget: 0 })
        ));
    }

    #[test]
    fn objective_non_increasing_in_tau() {
        let p = problem();
        let mut prev = f64::INFINITY;
        for tau in 1..=5 {
            let r = p.select_exact(tau, &ExactOptions::default()).unwrap();
            assert!(r.objective <= prev * (1.0 + 1e-12), "tau={tau}");
            prev = r.objective;
        }
    }
}
