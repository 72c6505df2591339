use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cardtune::cards::CardError;
use cardtune::pipeline::PipelineError;
use cardtune::registry::RegistryError;
use cardtune::transfer::TransferError;
use cardtune::tuner::TuneError;
use serde::{Deserialize, Serialize};

use crate::session::SessionError;

/// Body of every error response: `{"error": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                field: None,
            },
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.body.field = Some(field.into());
        self
    }

    pub fn unknown_session(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }

    pub fn busy() -> Self {
        ApiError::new(
            StatusCode::CONFLICT,
            "session_busy",
            "another request on this session is in progress",
        )
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    /// Card error from the document under `root` (`data_card`, ...).
    pub fn card(root: &str, e: &CardError) -> Self {
        let field = match e.field() {
            Some("") | None => root.to_string(),
            Some(f) => format!("{root}.{f}"),
        };
        ApiError::bad_request(e.code(), e.to_string()).with_field(field)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            _ if e.is_backend() => StatusCode::BAD_GATEWAY,
            PipelineError::Transfer(TransferError::Encoder(_)) => StatusCode::BAD_GATEWAY,
            PipelineError::Transfer(TransferError::InvalidParameters(_))
            | PipelineError::Tune(TuneError::InvalidBudget) => StatusCode::BAD_REQUEST,
            PipelineError::Tune(TuneError::AllCandidatesFiltered) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::WrongState { .. } => ApiError::new(StatusCode::CONFLICT, "wrong_state", e.to_string()),
            SessionError::Pipeline(p) => p.into(),
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::InvalidRecord(_) | RegistryError::UnknownModelCard(_) => StatusCode::BAD_REQUEST,
            RegistryError::RegressionRejected { .. } => StatusCode::CONFLICT,
            RegistryError::IoFailure(_) | RegistryError::CorruptRegistry(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorEnvelope { error: self.body })).into_response()
    }
}
