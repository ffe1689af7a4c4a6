use thiserror::Error;

/// Errors raised by model construction, estimation and evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("value {value} outside image [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("signal role mismatch: expected {expected}, got {got}")]
    RoleMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("singular unmixing matrix (|det| = {0:e})")]
    SingularUnmixing(f64),

    #[error("monotonicity violated on channel {channel}: derivative {derivative} at x = {x}")]
    MonotonicityViolation {
        channel: usize,
        x: f64,
        derivative: f64,
    },

    #[error("update failed after {0} step halvings")]
    StepFailure(usize),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    #[error("degenerate source: {0}")]
    DegenerateSource(String),
}

pub type Result<T> = std::result::Result<T, Error>;
