use crate::exprdsl::ExprError;

/// Errors shared by the numerical modules.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("profile violates the pole condition {which}: measured {measured}, expected {expected}")]
    PoleCondition {
        which: String,
        measured: f64,
        expected: f64,
    },
    #[error("profile R is not positive at s = {s} (R = {value})")]
    NonPositiveProfile { s: f64, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("refused: {reason} (measured {measured})")]
    Refused { reason: String, measured: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
