use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input parameter is out of range or not finite.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A closed-form quantity was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("estimator not supported: {0}")]
    UnsupportedEstimator(String),

    /// `step` was called on a state with no enabled transition.
    #[error("process is absorbed: no enabled transition")]
    Absorbed,

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn parameter(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// Fails unless `value` is finite.
pub(crate) fn finite(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(parameter(format!("{name} must be finite, got {value}")))
    }
}
