use thiserror::Error;

/// Errors produced by the evaluation, certification and experiment routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeylError {
    /// An argument failed validation. `param` names the offending input.
    #[error("invalid `{param}`: {reason}")]
    InvalidArgument { param: &'static str, reason: String },

    /// Adaptive refinement ran out of evaluations before the certificate was reached.
    #[error("refinement budget of {budget} evaluations exhausted (undershoot {undershoot:.3e} > target {target:.3e})")]
    BudgetExhausted {
        budget: usize,
        undershoot: f64,
        target: f64,
    },

    /// The requested grid would exceed the evaluation guard.
    #[error("memory guard: {evaluations} evaluations exceed the limit of {limit}")]
    TooLarge { evaluations: u128, limit: u128 },

    /// A fit or campaign had too few usable points.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl WeylError {
    pub(crate) fn invalid(param: &'static str, reason: impl Into<String>) -> Self {
        WeylError::InvalidArgument {
            param,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for WeylError {
    fn from(e: std::io::Error) -> Self {
        WeylError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for WeylError {
    fn from(e: serde_json::Error) -> Self {
        WeylError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, WeylError>;
