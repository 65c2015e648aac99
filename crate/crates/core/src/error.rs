use thiserror::Error;

/// Errors produced by the allocation, simulation and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate polynomial")]
    DegeneratePolynomial,

    #[error("degenerate series")]
    DegenerateSeries,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("budget below one round per setting: need at least {needed}, got {got}")]
    BudgetTooSmall { needed: u64, got: u64 },

    #[error("dual optimizer did not converge, last relative gap {gap:e}")]
    NotConverged { gap: f64 },

    #[error("undefined at critical point")]
    ZeroGradient,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
