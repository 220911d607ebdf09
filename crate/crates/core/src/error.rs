use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("blocks do not partition the basis: {0}")]
    Partition(String),

    #[error("outcome labels must contain both +1 and -1")]
    DegenerateLabeling,

    #[error("branch has vanishing probability {prob:e}")]
    ZeroProbability { prob: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical integrity check failed: {0}")]
    NumericalIntegrity(String),

    #[error("no interior maximum in window [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("semidefinite program is infeasible or unbounded: {0}")]
    Infeasible(String),

    #[error("solver stopped after {iterations} iterations with relative gap {gap:e}")]
    NotConverged { gap: f64, iterations: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
