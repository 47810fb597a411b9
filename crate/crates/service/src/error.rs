use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rhumo_core::api::ErrorBody;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Engine(#[from] rhumo_core::Error),

    #[error("unknown session {0}")]
    UnknownSession(String),

    #[error("invalid request: {0}")]
    BadRequest(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Engine(e) => e.code(),
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::BadRequest(_) => "invalid_request",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        use rhumo_core::Error as E;
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Engine(e) => match e {
                E::Config(_) | E::Io { .. } | E::Parse { .. } | E::Schema(_) | E::EmptyWorkload => {
                    StatusCode::BAD_REQUEST
                }
                E::BatchPending | E::NoPendingBatch | E::AlreadyLabeled(_) => StatusCode::CONFLICT,
                E::LabelMismatch(_) | E::UnknownPair(_) => StatusCode::UNPROCESSABLE_ENTITY,
                E::SingularKernel { .. } | E::UndefinedBound(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().into(),
            message: self.to_string(),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(code = self.code(), "{self}");
        }
        (self.status(), Json(self.body())).into_response()
    }
}
