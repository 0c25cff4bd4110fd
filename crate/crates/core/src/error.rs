use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or arguments.
    Usage,
    /// Input data failed validation (includes unreadable files).
    Validation,
    /// The exact solver ran out of budget before finding any incumbent.
    Budget,
    /// Anything that indicates a bug or a numerical breakdown.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("line {line}: invalid count `{value}` (expected a non-negative integer)")]
    InvalidCount { line: u64, value: String },

    #[error("line {line}: invalid time index `{value}`")]
    InvalidTime { line: u64, value: String },

    #[error("line {line}: duplicate entry for location `{location}`, variable `{variable}`, time {time}")]
    DuplicateEntry {
        line: u64,
        location: String,
        variable: String,
        time: i64,
    },

    #[error("ragged time coverage in variable `{variable}` (expected length {expected}); offending series: {}", .series.join(", "))]
    RaggedCoverage {
        variable: String,
        expected: usize,
        series: Vec<String>,
    },

    #[error("series index ({location}, {variable}) out of range for tensor with {locations} locations and {variables} variables")]
    BadIndex {
        location: usize,
        variable: usize,
        locations: usize,
        variables: usize,
    },

    #[error("missing series: location `{location}`, variable `{variable}`")]
    MissingSeries { location: String, variable: String },

    #[error("unknown location `{0}`")]
    UnknownLocation(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("series too short: length {len} does not exceed order {order}")]
    SeriesTooShort { len: usize, order: usize },

    #[error("support set is empty")]
    EmptySupport,

    #[error("invalid support set: {0}")]
    InvalidSupport(String),

    #[error("lag {lag} exceeds autoregression order {order}")]
    LagOutOfRange { lag: usize, order: usize },

    #[error("coefficient mismatch: {0}")]
    CoefficientMismatch(String),

    #[error("no usable series: every series is missing or too short for order {order}")]
    NoUsableSeries { order: usize },

    #[error("node budget of {budget} exhausted before any incumbent support was found")]
    BudgetExhausted { budget: u64 },

    #[error("every series failed to fit; first failure: {0}")]
    AllFitsFailed(String),

    #[error("target lag {target} exceeds autoregression order {order}")]
    TargetLagOutOfRange { target: usize, order: usize },

    #[error("location sets differ; only in first: [{}]; only in second: [{}]", .only_a.join(", "), .only_b.join(", "))]
    LocationMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },

    #[error("reports disagree on target lag ({a} vs {b})")]
    TargetLagMismatch { a: usize, b: usize },

    #[error("variable `{variable}` has length {length}, shorter than one cycle of {cycle} steps")]
    NoCompleteCycle {
        variable: String,
        length: usize,
        cycle: usize,
    },

    #[error("lag {lag} must be in [1, {len}) for a series of length {len}")]
    ScatterLag { lag: usize, len: usize },

    #[error("unsupported resolution `{0}`")]
    Resolution(String),

    #[error("baseline variable `{0}` has zero total volume")]
    ZeroBaseline(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid synthetic spec: {0}")]
    Synth(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Synth(_) | Error::Resolution(_) => {
                ErrorKind::Usage
            }
            Error::BudgetExhausted { .. } => ErrorKind::Budget,
            Error::Numerical(_) => ErrorKind::Internal,
            _ => ErrorKind::Validation,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
