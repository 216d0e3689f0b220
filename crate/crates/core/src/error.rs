use thiserror::Error;

/// Errors raised by the solvers and medium constructors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("operation requires a {expected} medium, got {found}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("box of {sites} sites exceeds the budget of {budget} sites")]
    Capacity { sites: u128, budget: usize },

    #[error("box radius {radius} too small, need at least {required}")]
    BoxTooSmall { radius: u64, required: u64 },

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
