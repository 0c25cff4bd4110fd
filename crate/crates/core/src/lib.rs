//! Sparse simplex-constrained autoregression for periodicity analysis of
//! multidimensional count time series.
//!
//! The pipeline has two stages. A single lag support of bounded size is
//! selected for all series at once by fitting one shared coefficient vector
//! on the probability simplex ([`selection`]). Each series is then fitted
//! separately on that support ([`simplex`]), and the coefficient at a target
//! lag, e.g. 168 for hourly data with a weekly cycle, is read off as that
//! series' periodicity strength ([`analytics`]).

pub mod analytics;
pub mod config;
pub mod error;
pub mod lag;
pub mod selection;
pub mod simplex;
pub mod synth;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
pub use lag::{build_lag_system, residual_sse, LagSystem};
pub use selection::{
    evaluate_support, select_support_exact, select_support_greedy, ExactOptions, GreedyOptions,
    Optimality, SelectionProblem, SelectionResult, Solver, SupportSet,
};
pub use simplex::{fit_all, fit_series, CoefficientField, FitOutcome, SimplexFit};
pub use tensor::{MobilityTensor, SeriesKey};
