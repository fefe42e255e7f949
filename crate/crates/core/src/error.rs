use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value outside the allowed alphabet: {0}")]
    Domain(String),

    #[error("system of {size} exceeds the enumeration cap of {cap}")]
    Capacity { size: usize, cap: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid model structure: {0}")]
    Structure(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("contraction failed: {0}")]
    Contraction(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
