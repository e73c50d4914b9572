use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input violated a precondition (normalization, range, shape, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An integrand or simulated activation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The numerics ran but cannot support a verdict at the configured resolution.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn inconclusive(msg: impl Into<String>) -> Self {
        Error::Inconclusive(msg.into())
    }

    pub(crate) fn non_finite(msg: impl Into<String>) -> Self {
        Error::NonFinite(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
