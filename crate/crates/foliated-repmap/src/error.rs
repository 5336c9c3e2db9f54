use thiserror::Error;

/// Errors surfaced by roadmap construction, problem loading and queries.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid problem definition: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("query rejected: {0}")]
    QueryRejected(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("atlas construction failed: {0}")]
    AtlasConstruction(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
