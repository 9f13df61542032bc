use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("case {case}: timestamps decrease ({previous} then {next})")]
    NonMonotonicTimestamps { case: String, previous: f64, next: f64 },
    #[error("case {case}: static attribute `{attr}` differs between events")]
    InconsistentStatic { case: String, attr: String },
    #[error("case {case}, decision point {k}: action `{action}` is not in the action space")]
    UnknownAction { case: String, k: usize, action: String },
    #[error("invalid decision point specification: {0}")]
    InvalidSpec(String),
    #[error("empty data: {0}")]
    Empty(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("feature width mismatch: model expects {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("positivity violated: action `{action}` has no observed samples at decision point {k}")]
    Positivity { k: usize, action: String },
    #[error("decision point {k}: non-finite propagated value")]
    NonFiniteValue { k: usize },
    #[error("prefix length {actual} does not match decision point {k} (expects {expected})")]
    PrefixLength { k: usize, expected: usize, actual: usize },
    #[error("invalid action sequence: {0}")]
    InvalidActions(String),
    #[error("combinatorial limit exceeded: {count} action sequences > cap {cap}")]
    CombinatorialLimit { count: u128, cap: u128 },
    #[error("gain undefined: historical total is zero")]
    ZeroBaseline,
    #[error("config error: {0}")]
    Config(String),
    #[error("policy artifact: {0}")]
    Artifact(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
