use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The requested atom budget cannot accommodate even the coarsest grid.
    #[error("atom budget {got} too small, need at least {need}")]
    BudgetTooSmall { need: usize, got: usize },

    /// The atom's hyperplane does not meet the domain.
    #[error("atom inactive on the domain: {0}")]
    InactiveAtom(String),

    /// The discretization is too coarse for the requested operation.
    /// Experiment harnesses treat this as a skipped cell, not a failure.
    #[error("below resolution: {0}")]
    BelowResolution(String),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("optimizer diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn below_resolution(msg: impl Into<String>) -> Self {
        Error::BelowResolution(msg.into())
    }
}
