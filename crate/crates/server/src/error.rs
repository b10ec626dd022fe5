//! JSON error bodies and the code-to-status table.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status_for(code),
            code: code.to_string(),
            message: message.into(),
            details: None,
        }
    }

    pub fn unauthenticated(message: impl Into<String>) -> Self {
        Self::new("UNAUTHENTICATED", message)
    }

    pub fn bad_body(message: impl Into<String>) -> Self {
        Self::new("INVALID_BODY", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new("INTERNAL", message)
    }

    pub fn code(&self) -> &str {
        &self.code
    }
}

/// HTTP status for a module error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "UNAUTHENTICATED" => StatusCode::UNAUTHORIZED,
        "ACCESS_DENIED" => StatusCode::FORBIDDEN,
        "CONFLICT" | "DUPLICATE_NAME" | "CRAWL_IN_PROGRESS" => StatusCode::CONFLICT,
        "STORAGE_IO" | "UNDERFLOW" | "INTERNAL" => StatusCode::INTERNAL_SERVER_ERROR,
        "MEDIA_NOT_FOUND" | "ROUTE_NOT_FOUND" => StatusCode::NOT_FOUND,
        c if c.starts_with("UNKNOWN_") => StatusCode::NOT_FOUND,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<metapix_core::Error> for ApiError {
    fn from(e: metapix_core::Error) -> Self {
        let mut api = ApiError::new(e.code(), e.to_string());
        api.details = e.details();
        api
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = %self.code, "{}", self.message);
        }
        (self.status, Json(self)).into_response()
    }
}
