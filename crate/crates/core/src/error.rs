use thiserror::Error;

/// Errors raised by the analysis, optimization and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AoiError {
    #[error("invalid rate {name} = {value}: rates must be finite and > 0")]
    InvalidRate { name: &'static str, value: f64 },

    #[error("invalid probability {name} = {value}: must lie in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("source index {index} out of range 1..={count}")]
    SourceOutOfRange { index: usize, count: usize },

    #[error("pattern length {len} exceeds the supported maximum {max}")]
    PatternTooLong { len: usize, max: usize },

    #[error("chain failed validation: {0}")]
    InvalidChain(String),

    #[error("sub-generator matrix is singular")]
    SingularGenerator,

    #[error("transient indicator vector is all zeros")]
    DegenerateTheta,

    #[error("recurrent chain is reducible (more than one closed class)")]
    ReducibleChain,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("internal consistency check failed: {0}")]
    SelfCheck(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, AoiError>;

pub(crate) fn check_rate(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(AoiError::InvalidRate { name, value })
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AoiError::InvalidProbability { name, value })
    }
}

impl From<std::io::Error> for AoiError {
    fn from(e: std::io::Error) -> Self {
        AoiError::Io(e.to_string())
    }
}
