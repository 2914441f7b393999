use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cobol_core::CobolError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    NotFound(String),

    #[error("session is {actual}, expected {expected}")]
    Conflict { expected: &'static str, actual: &'static str },

    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("storage error: {0}")]
    Storage(String),

    #[error("corrupt event log: {0}")]
    Corrupt(String),
}

impl SessionError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SessionError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Conflict { .. } => StatusCode::CONFLICT,
            SessionError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Storage(_) | SessionError::Corrupt(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            SessionError::NotFound(_) => "not_found",
            SessionError::Conflict { .. } => "conflict",
            SessionError::Invalid { .. } => "invalid",
            SessionError::Storage(_) => "storage",
            SessionError::Corrupt(_) => "corrupt",
        }
    }
}

impl From<CobolError> for SessionError {
    fn from(e: CobolError) -> Self {
        match e {
            CobolError::InvalidParameter { name, reason } => SessionError::invalid(name, reason),
            CobolError::UnknownBenchmark(name) => SessionError::invalid("objective.name", format!("unknown benchmark `{name}`")),
            CobolError::DimensionMismatch { .. } | CobolError::LengthMismatch { .. } => {
                SessionError::invalid("objective", e.to_string())
            }
            other => SessionError::Storage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for SessionError {
    fn from(e: std::io::Error) -> Self {
        SessionError::Storage(e.to_string())
    }
}

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        if let SessionError::Invalid { field, .. } = &self {
            body["field"] = json!(field);
        }
        (self.status(), Json(body)).into_response()
    }
}
