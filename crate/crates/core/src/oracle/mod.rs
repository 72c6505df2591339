//! Language-model backends and the response and training-log grammars.

mod http;
mod log;
mod mock;
mod response;

use thiserror::Error;

use crate::composer::PromptParagraph;

pub use http::{HttpBackend, API_KEY_ENV, API_URL_ENV, MAX_ATTEMPTS};
pub use log::{parse_training_log, LogEntry, LogError, TrainingLog};
pub use mock::{
    mock_complete, model_fps, optimal_lr, step_toward, surface_log, surface_score, MockBackend, LR_STEP_DECADES,
    MOCK_EPOCHS, MOCK_ID, PEAK_SCORE,
};
pub use response::{
    parse_response, BackendResponse, ResponseError, ARCHITECTURE_HEADER, DATA_PROCESSING_HEADER,
    HYPERPARAMETERS_HEADER, LOG_HEADER, RESPONSE_HEADERS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("malformed prompt: {0}")]
    MalformedPrompt(String),
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("endpoint rejected credentials (status {0})")]
    AuthFailure(u16),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("request budget of {budget} exhausted")]
    BudgetExceeded { budget: u64 },
    #[error("backend not configured: {0}")]
    NotConfigured(String),
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::MalformedPrompt(_) => "malformed_prompt",
            BackendError::EndpointUnreachable(_) => "endpoint_unreachable",
            BackendError::AuthFailure(_) => "auth_failure",
            BackendError::Status(_) => "backend_status",
            BackendError::BudgetExceeded { .. } => "budget_exceeded",
            BackendError::NotConfigured(_) => "backend_not_configured",
        }
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &PromptParagraph) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable response: {0}")]
    Response(#[from] ResponseError),
}

impl OracleError {
    pub fn code(&self) -> &'static str {
        match self {
            OracleError::Backend(e) => e.code(),
            OracleError::Response(_) => "bad_response",
        }
    }
}

/// Sends `prompt` and parses the reply.
pub fn query(backend: &dyn Backend, prompt: &PromptParagraph) -> Result<BackendResponse, OracleError> {
    let raw = backend.complete(prompt)?;
    Ok(parse_response(&raw)?)
}
