use thiserror::Error;

/// Errors raised by the optimisation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CobolError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver did not converge: {message} (best value {best_value}, violation {max_violation:e})")]
    SolverFailure {
        message: String,
        best_value: f64,
        max_violation: f64,
        best_point: Vec<f64>,
    },

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("rejection sampling exhausted {attempts} attempts")]
    SamplingExhausted { attempts: usize },

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = CobolError> = std::result::Result<T, E>;

impl CobolError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        CobolError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for CobolError {
    fn from(e: std::io::Error) -> Self {
        CobolError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CobolError {
    fn from(e: serde_json::Error) -> Self {
        CobolError::Format(e.to_string())
    }
}

impl From<csv::Error> for CobolError {
    fn from(e: csv::Error) -> Self {
        CobolError::Format(e.to_string())
    }
}
