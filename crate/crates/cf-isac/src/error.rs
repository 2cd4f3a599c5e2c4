//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad dimensions, out-of-range parameters).
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs outside a function's mathematical domain (e.g. zero distance).
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear-algebra step failed (non-PD covariance, singular system).
    #[error("numerical error in {context}: {detail}")]
    Numerical { context: String, detail: String },

    /// A Gram matrix was rank deficient where an inverse was required.
    #[error("rank-deficient system in {context}: condition estimate {cond:.3e}")]
    RankDeficient { context: String, cond: f64 },

    /// A degenerate input for which no meaningful output exists.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
