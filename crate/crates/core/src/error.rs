use thiserror::Error;

/// Errors raised by the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid density profile at x2 = {x}: {reason}")]
    ProfileInvalid { x: f64, reason: String },

    #[error(
        "subcritical viscosity: mu = {mu} does not exceed the critical viscosity \
         mu_c(k = {k}) = {mu_c} (bilinear form not coercive)"
    )]
    SubcriticalViscosity { k: f64, mu: f64, mu_c: f64 },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no extremal function: both slip coefficients vanish")]
    NoExtremal,

    #[error("threshold violation: mu = {mu} must exceed 3 mu_c = {threshold}")]
    ThresholdViolation { mu: f64, threshold: f64 },

    #[error("normalization cannot be verified: {0}")]
    NormalizationUnverifiable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
