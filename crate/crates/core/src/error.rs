use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model validation failed: {0}")]
    ValidationFailed(String),

    #[error("admissibility violated: {0}")]
    Admissibility(String),

    #[error("step-size rule violated: total jump probability per step {prob:.4} > 0.1; use at least {required_steps} steps")]
    StepSize { prob: f64, required_steps: usize },

    #[error("missing derivative callback: {0}")]
    MissingDerivative(&'static str),

    #[error("observation inconsistent with model: {0}")]
    InconsistentObservation(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("tree size {estimate} exceeds limit {limit}")]
    TreeTooLarge { estimate: u64, limit: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
