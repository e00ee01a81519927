use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use regionrec::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Validation,
    NotFound,
    Internal,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip)]
    status: Option<u16>,
}

impl ApiError {
    pub fn validation(message: impl Into<String>, field: Option<&str>) -> Self {
        Self::new(ErrorCode::Validation, StatusCode::BAD_REQUEST, message, field)
    }

    pub fn not_found(message: impl Into<String>, field: Option<&str>) -> Self {
        Self::new(ErrorCode::NotFound, StatusCode::NOT_FOUND, message, field)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, StatusCode::INTERNAL_SERVER_ERROR, message, None)
    }

    pub fn unavailable(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, StatusCode::SERVICE_UNAVAILABLE, message, None)
    }

    pub fn method_not_allowed() -> Self {
        Self::new(ErrorCode::NotFound, StatusCode::METHOD_NOT_ALLOWED, "method not allowed", None)
    }

    fn new(code: ErrorCode, status: StatusCode, message: impl Into<String>, field: Option<&str>) -> Self {
        Self {
            code,
            message: message.into(),
            field: field.map(str::to_string),
            status: Some(status.as_u16()),
        }
    }

    pub fn status(&self) -> StatusCode {
        self.status
            .and_then(|s| StatusCode::from_u16(s).ok())
            .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match &e {
            Error::Validation(_) => ApiError::validation(e.to_string(), None),
            Error::Referential { .. } => ApiError::not_found(e.to_string(), None),
            _ => {
                tracing::error!(error = %e, "request failed");
                ApiError::internal(e.to_string())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}
