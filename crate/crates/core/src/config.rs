//! Run configuration shared by every command, and the selection document.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{
    ExactOptions, GreedyOptions, Optimality, SelectionResult, Solver, SupportSet,
};
use crate::simplex::SimplexOptions;
use crate::tensor::{ColumnSchema, IngestOptions, TimeFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Maximum lag `d`.
    pub order: usize,
    /// Maximum support size `tau`.
    pub sparsity: usize,
    pub solver: Solver,
    pub node_budget: u64,
    pub swap_rounds: usize,
    pub kkt_tol: f64,
    pub tie_tol: f64,
    pub target_lag: usize,
    pub thresholds: Vec<f64>,
    pub seed: u64,
    pub sort_ids: bool,
    /// Worker threads; 0 uses all available cores. Not echoed into outputs,
    /// which do not depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub time_base: i64,
    pub time_format: TimeFormat,
    pub resolution: String,
    pub fill_trailing: bool,
    pub schema: ColumnSchema,
    /// Baseline variable for cycle-volume recovery.
    pub baseline: Option<String>,
    /// Cycle position of the first step (0 = Monday 00:00).
    pub anchor: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            order: 168,
            sparsity: 4,
            solver: Solver::Greedy,
            node_budget: 10_000_000,
            swap_rounds: 100,
            kkt_tol: 1e-8,
            tie_tol: 1e-12,
            target_lag: 168,
            thresholds: vec![0.8],
            seed: 0,
            sort_ids: false,
            threads: 0,
            time_base: 1,
            time_format: TimeFormat::Index,
            resolution: "1h".into(),
            fill_trailing: false,
            schema: ColumnSchema::default(),
            baseline: None,
            anchor: 0,
        }
    }
}

impl SolverConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_json_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("order must be at least 1".into()));
        }
        if self.target_lag == 0 || self.target_lag > self.order {
            return Err(Error::Config(format!(
                "target lag {} must lie in 1..={}",
                self.target_lag, self.order
            )));
        }
        if self.sparsity == 0 {
            return Err(Error::Config("sparsity must be at least 1".into()));
        }
        if self.node_budget == 0 {
            return Err(Error::Config("node budget must be positive".into()));
        }
        if !(self.kkt_tol > 0.0 && self.kkt_tol.is_finite()) {
            return Err(Error::Config("kkt tolerance must be positive".into()));
        }
        if !(self.tie_tol >= 0.0 && self.tie_tol.is_finite()) {
            return Err(Error::Config("tie tolerance must be non-negative".into()));
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        crate::analytics::Resolution::parse(&self.resolution)?;
        Ok(())
    }

    pub fn simplex_options(&self) -> SimplexOptions {
        SimplexOptions {
            kkt_tol: self.kkt_tol,
            ..SimplexOptions::default()
        }
    }

    pub fn exact_options(&self) -> ExactOptions {
        ExactOptions {
            node_budget: self.node_budget,
            time_limit: None,
            tie_tol: self.tie_tol,
            simplex: self.simplex_options(),
        }
    }

    pub fn greedy_options(&self) -> GreedyOptions {
        GreedyOptions {
            swap_rounds: self.swap_rounds,
            tie_tol: self.tie_tol,
            simplex: self.simplex_options(),
            ..GreedyOptions::default()
        }
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            schema: self.schema.clone(),
            time_base: self.time_base,
            time_format: self.time_format,
            sort_ids: self.sort_ids,
            resolution: self.resolution.clone(),
            fill_trailing: self.fill_trailing,
            ..IngestOptions::default()
        }
    }
}

/// JSON form of a selection result, with the effective configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub support: SupportSet,
    pub coefficients: BTreeMap<usize, f64>,
    pub objective: f64,
    pub optimality: Optimality,
    pub solver: Solver,
    pub nodes: u64,
    pub series_used: usize,
    pub stopped_early: bool,
    pub config: SolverConfig,
}

impl SelectionDocument {
    pub fn new(result: &SelectionResult, config: &SolverConfig) -> Self {
        Self {
            support: result.support.clone(),
            coefficients: result
                .support
                .lags()
                .iter()
                .copied()
                .zip(result.global_coeffs.iter().copied())
                .collect(),
            objective: result.objective,
            optimality: result.optimality,
            solver: result.solver,
            nodes: result.nodes,
            series_used: result.series_used,
            stopped_early: result.stopped_early,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Reads a support from either a bare JSON array of lags or any object with
/// a `support` array, such as a selection document.
pub fn parse_support_json(s: &str) -> Result<SupportSet> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        Bare(Vec<usize>),
        Object { support: Vec<usize> },
    }
    let lags = match serde_json::from_str::<Doc>(s)
        .map_err(|e| Error::InvalidSupport(format!("unreadable support file: {e}")))?
    {
        Doc::Bare(l) | Doc::Object { support: l } => l,
    };
    SupportSet::new(lags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = SolverConfig::default();
        c.validate().unwrap();
        assert_eq!((c.order, c.sparsity, c.target_lag), (168, 4, 168));
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = SolverConfig::from_json_str(r#"{"order": 336, "target_lag": 336, "solver": "exact"}"#).unwrap();
        assert_eq!(c.order, 336);
        assert_eq!(c.solver, Solver::Exact);
        assert_eq!(c.sparsity, 4);
        assert!(SolverConfig::from_json_str(r#"{"ordr": 3}"#).is_err());
    }

    #[test]
    fn invariants_checked() {
        let bad = [
            SolverConfig { target_lag: 200, ..Default::default() },
            SolverConfig { target_lag: 0, ..Default::default() },
            SolverConfig { sparsity: 0, ..Default::default() },
            SolverConfig { node_budget: 0, ..Default::default() },
            SolverConfig { resolution: "7min".into(), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn support_file_forms() {
        assert_eq!(parse_support_json("[168, 1]").unwrap().lags(), &[1, 168]);
        let doc = r#"{"support": [1, 24], "objective": 3.0}"#;
        assert_eq!(parse_support_json(doc).unwrap().lags(), &[1, 24]);
        assert!(parse_support_json("[]").unwrap().is_empty());
        assert!(parse_support_json("[0, 2]").is_err());
        assert!(parse_support_json("{}").is_err());
    }
}
