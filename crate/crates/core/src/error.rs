use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("covariance is not positive definite (det = {det:e})")]
    SingularCovariance { det: f64 },

    #[error("covariance violates the uncertainty bound: det = {det} < 1/4")]
    BelowUncertaintyBound { det: f64 },

    #[error("grid resolution too coarse: {0}")]
    Resolution(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("efficiency is indeterminate: denominator {denominator:e} is below tolerance")]
    Indeterminate { denominator: f64 },

    #[error("no squeezing observed: <Q-^2> = {q_minus_sq} is not below the shot-noise level 1/2")]
    NoSqueezing { q_minus_sq: f64 },

    #[error("unphysical result: {0}")]
    Unphysical(String),

    #[error("sinusoidal fit failed: {0}")]
    FitFailure(String),

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("malformed data at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
