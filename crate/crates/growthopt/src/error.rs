//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by objectives, oracles, optimizers and the harness.
///
/// Divergence of an optimizer run is deliberately *not* an error: it is a
/// recorded event on the trace (see `optimizers::DivergenceEvent`).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("component index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("{operation} is not supported for family {family}")]
    Unsupported {
        family: &'static str,
        operation: &'static str,
    },

    /// A constructor or operation precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The full gradient at the requested point is (numerically) zero, so a
    /// ratio-type noise statistic is undefined there.
    #[error("degenerate gradient: norm {norm:.3e} is at or below {threshold:.3e}")]
    DegenerateGradient { norm: f64, threshold: f64 },

    /// Configuration files, overrides and grid resolution.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor for [`Error::Contract`].
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Convenience constructor for [`Error::Config`].
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
