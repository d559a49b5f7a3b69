use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use monitomation_core::SubmitError;
use serde_json::json;

/// An error response: `{"error": <TypedName>, "message": ...}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub name: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, name: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status,
            name: name.into(),
            message: message.into(),
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MalformedBody", message)
    }

    pub fn not_found(name: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, name, message)
    }

    pub fn unavailable(name: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, name, message)
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let status = match e {
            SubmitError::DestinationUnknown(_) | SubmitError::UnknownNode(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.name(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.name, "message": self.message});
        (self.status, Json(body)).into_response()
    }
}
