use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown stimulus set {0:?}")]
    UnknownStimulusSet(String),

    #[error("unknown session {0:?}")]
    UnknownSession(String),

    #[error("malformed object ids: {0}")]
    MalformedIds(String),

    #[error("session is complete; no trial is in its gluing phase")]
    WrongPhase,

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("event log: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Core(#[from] gluing_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownStimulusSet(_) => "unknown_stimulus_set",
            Self::UnknownSession(_) => "unknown_session",
            Self::MalformedIds(_) => "malformed_ids",
            Self::WrongPhase => "wrong_phase",
            Self::BadRequest(_) => "bad_request",
            Self::Corrupt(_) => "corrupt_log",
            Self::Core(_) | Self::Io(_) | Self::Json(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::UnknownStimulusSet(_) | Self::UnknownSession(_) => StatusCode::NOT_FOUND,
            Self::MalformedIds(_) | Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::WrongPhase => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (self.status(), Json(body)).into_response()
    }
}
