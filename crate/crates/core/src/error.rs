use thiserror::Error;

/// Errors raised by model construction, simulation and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model `{model}` is misspecified: {reason}")]
    Spec { model: String, reason: String },

    #[error("numeric overflow in `{model}`: update of state {state:?} under environment {env:?} is not finite")]
    NumericOverflow { model: String, state: Vec<f64>, env: Vec<f64> },

    #[error("invalid pair: {0}")]
    InvalidPair(String),

    #[error("inconsistent minorization: {0}")]
    InconsistentSpec(String),

    #[error("degenerate decomposition: rejection sampler exceeded {cap} proposals")]
    DegenerateDecomposition { cap: usize },

    #[error("environment index {index} outside generated window [{lo}, {hi})")]
    WindowOutOfRange { index: i64, lo: i64, hi: i64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
