use thiserror::Error;

/// Errors raised by the library. Per-row ingest problems are not errors;
/// they are reported as [`crate::ingest::ValidationIssue`]s.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no {selection} found")]
    EmptySelection { selection: String },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("undefined AUC: {0}")]
    UndefinedAuc(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("training error: {0}")]
    Training(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
