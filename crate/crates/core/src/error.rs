//! Crate-wide error type and the exit-code contract used by the CLI.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tag address out of range: mux {mux}, port {port}, slot {slot}")]
    Address { mux: u8, port: u8, slot: u8 },

    #[error("shore value {0} outside (0, 1]")]
    ShoreDomain(f64),

    #[error("data error: {0}")]
    Data(String),

    #[error("replay source exhausted; last complete address: {last_complete}")]
    ReplayTruncated { last_complete: String },

    #[error("AUC undefined: scores must contain both labels")]
    UndefinedAuc,

    #[error("feature selection needs {requested} features but only {usable} have a defined AUC")]
    SelectionShortfall { usable: usize, requested: usize },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("SMO did not converge: KKT violation {violation:.3e} after {iterations} iterations")]
    NonConvergence { violation: f64, iterations: u64 },

    #[error("feature set mismatch: model expects {expected} values, got {got}")]
    FeatureMismatch { expected: usize, got: usize },

    #[error("feature catalogue mismatch: model built against {model}, pipeline provides {pipeline}")]
    CatalogueMismatch { model: String, pipeline: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 0 success, 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonConvergence { .. } => 4,
            _ => 3,
        }
    }
}
