//! Forward selection followed by swap local search.

use rayon::prelude::*;

use super::{Comparator, Optimality, SelectionProblem, SelectionResult, Solver, TraceEntry};
use crate::error::Result;
use crate::selection::SupportSet;
use crate::simplex::SimplexOptions;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyOptions {
    /// Maximum number of swap rounds after the forward pass.
    pub swap_rounds: usize,
    /// A lag is added, or a swap accepted, only if the objective drops by more
    /// than this fraction.
    pub improve_tol: f64,
    pub tie_tol: f64,
    pub simplex: SimplexOptions,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            swap_rounds: 100,
            improve_tol: 1e-10,
            tie_tol: 1e-12,
            simplex: SimplexOptions::default(),
        }
    }
}

struct Candidate {
    lags: Vec<usize>,
    weights: Vec<f64>,
    objective: f64,
}

/// Evaluates candidates in parallel and keeps the best; ties go to the
/// earliest candidate, and candidates are generated in lexicographic order.
fn best_of(
    problem: &SelectionProblem,
    candidates: Vec<Vec<usize>>,
    opts: &GreedyOptions,
    cmp: &Comparator,
) -> Option<Candidate> {
    let evaluated: Vec<Candidate> = candidates
        .into_par_iter()
        .map(|lags| {
            let sol = problem.fit_lags(&lags, &opts.simplex);
            Candidate {
                lags,
                weights: sol.weights,
                objective: sol.objective,
            }
        })
        .collect();
    let mut best: Option<Candidate> = None;
    for c in evaluated {
        let replace = match &best {
            None => true,
            Some(b) => c.objective < b.objective - cmp.tol(c.objective, b.objective),
        };
        if replace {
            best = Some(c);
        }
    }
    best
}

pub(super) fn select(problem: &SelectionProblem, tau: usize, opts: &GreedyOptions) -> Result<SelectionResult> {
    let d = problem.order();
    let cmp = Comparator::new(opts.tie_tol, problem.scale());
    let tau = tau.min(d);
    let mut trace = Vec::new();
    let mut nodes = 0u64;
    let mut iteration = 0usize;
    let mut current: Option<Candidate> = None;
    let mut stopped_early = false;

    while current.as_ref().map_or(0, |c| c.lags.len()) < tau {
        let base: Vec<usize> = current.as_ref().map_or_else(Vec::new, |c| c.lags.clone());
        let candidates: Vec<Vec<usize>> = (1..=d)
            .filter(|k| !base.contains(k))
            .map(|k| {
                let mut lags = base.clone();
                lags.push(k);
                lags.sort_unstable();
                lags
            })
            .collect();
        nodes += candidates.len() as u64;
        let best = best_of(problem, candidates, opts, &cmp).expect("at least one candidate lag");
        if let Some(cur) = &current {
            if !cmp.improves(best.objective, cur.objective, opts.improve_tol) {
                log::info!(
                    "forward selection stopped at {} lags: no lag improves the objective",
                    cur.lags.len()
                );
                stopped_early = true;
                break;
            }
        }
        iteration += 1;
        trace.push(TraceEntry {
            iteration,
            candidate: SupportSet(best.lags.clone()),
            objective: best.objective,
        });
        current = Some(best);
    }
    let mut current = current.expect("forward pass adds at least one lag");

    for _ in 0..opts.swap_rounds {
        let members = current.lags.clone();
        let mut candidates = Vec::new();
        for (i, _) in members.iter().enumerate() {
            for k in (1..=d).filter(|k| !members.contains(k)) {
                let mut lags = members.clone();
                lags[i] = k;
                lags.sort_unstable();
                candidates.push(lags);
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort();
        nodes += candidates.len() as u64;
        let best = best_of(problem, candidates, opts, &cmp).expect("nonempty");
        if !cmp.improves(best.objective, current.objective, opts.improve_tol) {
            break;
        }
        iteration += 1;
        trace.push(TraceEntry {
            iteration,
            candidate: SupportSet(best.lags.clone()),
            objective: best.objective,
        });
        current = best;
    }

    problem.finalize(
        current.lags,
        current.weights,
        Optimality::Heuristic,
        Solver::Greedy,
        trace,
        nodes,
        stopped_early,
    )
}
