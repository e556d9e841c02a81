use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session {0} not found")]
    NotFound(String),

    #[error("session {0} already exists")]
    Exists(String),

    #[error("invalid session id {0:?}")]
    BadId(String),

    #[error(transparent)]
    Core(#[from] concord_core::Error),

    #[error("storage: {0}")]
    Io(#[from] std::io::Error),

    #[error("evaluation task failed: {0}")]
    Task(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    kind: &'static str,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        use concord_core::Error as E;
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Exists(_) => StatusCode::CONFLICT,
            Self::BadId(_) => StatusCode::BAD_REQUEST,
            Self::Io(_) | Self::Task(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Self::Core(e) => match e {
                E::VersionConflict { .. } | E::StaleRequest { .. } => StatusCode::CONFLICT,
                E::NoOpenRequest => StatusCode::NOT_FOUND,
                E::Escalate | E::AllDeclined | E::Incomplete(_) => StatusCode::CONFLICT,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            },
        }
    }

    fn kind(&self) -> &'static str {
        use concord_core::Error as E;
        match self {
            Self::NotFound(_) => "not_found",
            Self::Exists(_) => "exists",
            Self::BadId(_) => "bad_id",
            Self::Io(_) => "storage",
            Self::Task(_) => "task",
            Self::Core(e) => match e {
                E::VersionConflict { .. } => "version_conflict",
                E::StaleRequest { .. } => "stale_request",
                E::NoOpenRequest => "no_open_request",
                E::Escalate | E::AllDeclined => "escalate",
                E::Incomplete(_) => "incomplete",
                E::UnknownExpert(_) => "unknown_expert",
                E::Conflict { .. } => "conflict",
                E::Parse { .. } => "parse",
                _ => "invalid",
            },
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = ErrorBody {
            error: self.to_string(),
            kind: self.kind(),
        };
        (status, Json(body)).into_response()
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
