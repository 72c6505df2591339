use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use cardtune::cards::{data_card_from_value, model_card_from_value, ModelCard};
use cardtune::composer::{PromptParagraph, UserRequest};
use cardtune::oracle::TrainingLog;
use cardtune::registry::TuningRecord;
use cardtune::transfer::Recommendation;
use cardtune::tuner::{Constraint, TuneResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ApiError;
use crate::session::{BackendChoice, RunSettings, Session, SessionState};
use crate::state::AppState;

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/cards", post(submit_cards))
        .route("/v1/sessions/{id}/recommend", post(recommend))
        .route("/v1/sessions/{id}/requests", post(post_request))
        .route("/v1/registry/records", get(list_records).post(add_record))
        .with_state(state)
}

fn json_body<T: DeserializeOwned>(body: &Bytes, code: &str) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        body
    };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(code, e.to_string()))
}

/// Runs `f` on the blocking pool with the session claimed.
async fn with_session<T, F>(state: Shared, id: String, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState, &mut Session) -> Result<T, ApiError> + Send + 'static,
{
    let slot = state.slot(&id)?;
    tokio::task::spawn_blocking(move || {
        let mut guard = AppState::claim(&slot)?;
        f(&state, &mut guard)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok" })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub state: SessionState,
}

async fn create_session(State(state): State<Shared>) -> (StatusCode, Json<Created>) {
    let id = state.create_session();
    (
        StatusCode::CREATED,
        Json(Created {
            id,
            state: SessionState::Empty,
        }),
    )
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Session> {
    let slot = state.slot(&id)?;
    let session = AppState::claim(&slot)?.clone();
    Ok(Json(session))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CardsBody {
    data_card: Value,
    model_card: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CardsResponse {
    pub state: SessionState,
    pub prompt: PromptParagraph,
}

async fn submit_cards(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<CardsResponse> {
    state.slot(&id)?;
    let body: CardsBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("malformed_document", e.to_string()))?;
    let data = data_card_from_value(&body.data_card).map_err(|e| ApiError::card("data_card", &e))?;
    let model = model_card_from_value(&body.model_card).map_err(|e| ApiError::card("model_card", &e))?;
    let resp = with_session(state, id, move |_, session| {
        let prompt = session.set_cards(data, model)?.clone();
        Ok(CardsResponse {
            state: session.state,
            prompt,
        })
    })
    .await?;
    Ok(Json(resp))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendBody {
    backend: Option<BackendChoice>,
    k: Option<usize>,
    tau: Option<f64>,
    budget: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub state: SessionState,
    pub recommendation: Recommendation,
    pub seed: Recommendation,
    pub predicted_log: TrainingLog,
    pub tune_result: TuneResult,
}

async fn recommend(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<RecommendResponse> {
    state.slot(&id)?;
    let body: RecommendBody = json_body(&body, "invalid_parameters")?;
    let defaults = RunSettings::default();
    let settings = RunSettings {
        backend: body.backend.unwrap_or(defaults.backend),
        k: body.k.unwrap_or(defaults.k),
        tau: body.tau.unwrap_or(defaults.tau),
        budget: body.budget.unwrap_or(defaults.budget),
    };
    let resp = with_session(state, id, move |app, session| {
        let backend = app.backend(settings.backend)?;
        let embedder = app.embedder()?;
        let registry = app.registry.load()?;
        let entry = session.recommend(settings, &registry, embedder.as_ref(), backend.as_ref())?;
        let o = &entry.outcome;
        Ok(RecommendResponse {
            state: SessionState::Recommended,
            recommendation: o.recommendation.clone(),
            seed: o.seed.clone(),
            predicted_log: o.predicted_log.clone(),
            tune_result: o.tune_result.clone(),
        })
    })
    .await?;
    Ok(Json(resp))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestBody {
    request: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestResponse {
    pub request: UserRequest,
    pub constraints: Vec<Constraint>,
    pub prompt: PromptParagraph,
    pub recommendation: Recommendation,
    pub predicted_log: TrainingLog,
    pub tune_result: TuneResult,
}

async fn post_request(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<RequestResponse> {
    state.slot(&id)?;
    let body: RequestBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("malformed_document", e.to_string()))?;
    if body.request.trim().is_empty() {
        return Err(ApiError::bad_request("empty_request", "request text is empty").with_field("request"));
    }
    let resp = with_session(state, id, move |app, session| {
        let choice = session.settings.unwrap_or_default().backend;
        let backend = app.backend(choice)?;
        let entry = session.post_request(&body.request, backend.as_ref())?;
        let o = &entry.outcome;
        Ok(RequestResponse {
            request: entry.request.clone().expect("follow-ups record their request"),
            constraints: entry.constraints.clone(),
            prompt: o.prompt.clone(),
            recommendation: o.recommendation.clone(),
            predicted_log: o.predicted_log.clone(),
            tune_result: o.tune_result.clone(),
        })
    })
    .await?;
    Ok(Json(resp))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordsResponse {
    pub records: Vec<TuningRecord>,
    pub model_cards: Vec<ModelCard>,
}

impl RecordsResponse {
    fn of(registry: &cardtune::registry::Registry) -> Self {
        RecordsResponse {
            records: registry.records().to_vec(),
            model_cards: registry.model_cards().cloned().collect(),
        }
    }
}

async fn list_records(State(state): State<Shared>) -> ApiResult<RecordsResponse> {
    let registry = tokio::task::spawn_blocking(move || state.registry.load())
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(RecordsResponse::of(&registry)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AddRecordBody {
    record: Value,
    model_card: Option<Value>,
}

async fn add_record(State(state): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<RecordsResponse>), ApiError> {
    let body: AddRecordBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("malformed_document", e.to_string()))?;
    let model_card = body
        .model_card
        .map(|v| model_card_from_value(&v).map_err(|e| ApiError::card("model_card", &e)))
        .transpose()?;
    if let Some(card) = body.record.get("data_card") {
        data_card_from_value(card).map_err(|e| ApiError::card("record.data_card", &e))?;
    }
    let record: TuningRecord = serde_json::from_value(body.record)
        .map_err(|e| ApiError::bad_request("invalid_record", e.to_string()).with_field("record"))?;
    let registry = tokio::task::spawn_blocking(move || state.registry.add(model_card, record))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(RecordsResponse::of(&registry))))
}
