use thiserror::Error;

/// Errors produced by the optimization library.
#[derive(Debug, Error)]
pub enum CboError {
    #[error("empty particle subset")]
    EmptySubset,

    #[error("non-finite {what}")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),

    #[error("objective returned non-finite value {value} for particle {particle} at iteration {iteration}")]
    NonFiniteLoss {
        particle: usize,
        iteration: usize,
        value: f64,
    },

    #[error("degenerate ensemble: no spread about the anchor point")]
    DegenerateEnsemble,
}

pub type Result<T> = std::result::Result<T, CboError>;
