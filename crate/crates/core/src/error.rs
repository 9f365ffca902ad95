pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module in this crate.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature exhausted its node budget before reaching the
    /// requested tolerance. Carries the best estimate obtained so far.
    #[error("quadrature did not converge: best estimate {best}, error estimate {error_estimate}, {nodes_used} nodes")]
    QuadratureNoConverge {
        best: f64,
        error_estimate: f64,
        nodes_used: usize,
    },

    /// An internal invariant was violated (indicates a bug, not bad input).
    #[error("internal error: {0}")]
    Internal(String),

    /// Configuration file or experiment description failed validation.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
