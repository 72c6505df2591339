//! End-to-end flows shared by the service and the command line: seed a
//! recommendation, tune it against predicted logs, and revise it after a
//! follow-up request.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::{DataCard, HyperParamConfig, ModelCard};
use crate::composer::{compose_followup, compose_prompt, ComposeError, PromptParagraph, UserRequest};
use crate::encoder::Embedder;
use crate::oracle::{query, Backend, OracleError, TrainingLog};
use crate::registry::Registry;
use crate::transfer::{recommend, Recommendation, RecommendationSource, TransferError, TransferParams};
use crate::tuner::{tune, Constraint, TuneError, TuneResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Tune(#[from] TuneError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Transfer(TransferError::InvalidParameters(_)) => "invalid_parameters",
            PipelineError::Transfer(_) => "transfer_failed",
            PipelineError::Oracle(e) => e.code(),
            PipelineError::Tune(e) => e.code(),
            PipelineError::Compose(ComposeError::EmptyLog) => "empty_log",
            PipelineError::Compose(_) => "missing_section",
        }
    }

    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            PipelineError::Oracle(_) | PipelineError::Tune(TuneError::Oracle(_))
        )
    }
}

/// Keeps the entries of `proposed` that validate against the model's space
/// and fills the rest from `fallback`.
fn adopt(model: &ModelCard, proposed: &HyperParamConfig, fallback: &HyperParamConfig) -> HyperParamConfig {
    let space = model.space();
    let mut out = space.complete(fallback);
    for (k, v) in proposed.iter() {
        if space.get(k).is_some_and(|s| s.domain.contains(v)) {
            out.insert(k.clone(), v.clone());
        }
    }
    out
}

/// Transfer recommendation; when no registry dataset qualifies, the
/// backend's proposal for the plain prompt is used instead of the bare
/// defaults.
pub fn seed_recommendation(
    data: &DataCard,
    model: &ModelCard,
    registry: &Registry,
    embedder: &dyn Embedder,
    backend: &dyn Backend,
    params: TransferParams,
) -> Result<Recommendation, PipelineError> {
    let rec = recommend(data, model, registry, embedder, params)?;
    if rec.source != RecommendationSource::Default || !rec.neighbor_summary.is_empty() {
        return Ok(rec);
    }
    let resp = query(backend, &compose_prompt(data, model, &[]))?;
    Ok(Recommendation {
        config: adopt(model, &resp.hyperparameters, &rec.config),
        source: RecommendationSource::Backend,
        neighbor_summary: Vec::new(),
        rationale: format!(
            "no registry neighbors; configuration proposed by backend `{}`",
            backend.id()
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Prompt the round started from.
    pub prompt: PromptParagraph,
    /// Starting point handed to the tuner.
    pub seed: Recommendation,
    /// Tuned recommendation.
    pub recommendation: Recommendation,
    pub predicted_log: TrainingLog,
    pub tune_result: TuneResult,
}

fn tuned(seed: &Recommendation, result: &TuneResult) -> Recommendation {
    Recommendation {
        config: result.best_config.clone(),
        source: seed.source,
        neighbor_summary: seed.neighbor_summary.clone(),
        rationale: format!(
            "{}; tuned with {} predicted-log queries (final val_metric {:.4})",
            seed.rationale, result.queries_used, result.best_final_metric
        ),
    }
}

/// Prompt describing the current state: the model card pinned to `config`.
pub fn state_prompt(data: &DataCard, model: &ModelCard, config: &HyperParamConfig) -> PromptParagraph {
    compose_prompt(data, &model.pinned(config), &[])
}

#[allow(clippy::too_many_arguments)]
pub fn run_recommend(
    data: &DataCard,
    model: &ModelCard,
    registry: &Registry,
    embedder: &dyn Embedder,
    backend: &dyn Backend,
    params: TransferParams,
    constraints: &[Constraint],
    budget: usize,
) -> Result<Outcome, PipelineError> {
    let seed = seed_recommendation(data, model, registry, embedder, backend, params)?;
    let result = tune(&seed, data, model, backend, constraints, budget)?;
    Ok(Outcome {
        prompt: compose_prompt(data, model, &[]),
        recommendation: tuned(&seed, &result),
        predicted_log: result.best_log.clone(),
        seed,
        tune_result: result,
    })
}

/// Sends a follow-up prompt (current state, its predicted log and the new
/// request) and re-tunes from the backend's revised configuration under
/// `constraints`.
#[allow(clippy::too_many_arguments)]
pub fn run_followup(
    data: &DataCard,
    model: &ModelCard,
    current: &Recommendation,
    current_log: &TrainingLog,
    request: &UserRequest,
    backend: &dyn Backend,
    constraints: &[Constraint],
    budget: usize,
) -> Result<Outcome, PipelineError> {
    let previous = state_prompt(data, model, &current.config);
    let prompt = compose_followup(&previous, current_log, request)?;
    let resp = query(backend, &prompt)?;
    let seed = Recommendation {
        config: adopt(model, &resp.hyperparameters, &current.config),
        source: RecommendationSource::Backend,
        neighbor_summary: current.neighbor_summary.clone(),
        rationale: format!(
            "revised by backend `{}` for request `{}`",
            backend.id(),
            request_text(request)
        ),
    };
    let result = tune(&seed, data, model, backend, constraints, budget)?;
    Ok(Outcome {
        prompt,
        recommendation: tuned(&seed, &result),
        predicted_log: result.best_log.clone(),
        seed,
        tune_result: result,
    })
}

fn request_text(r: &UserRequest) -> String {
    match r {
        UserRequest::Constraint(c) => c.to_string(),
        UserRequest::MetricAddition(m) => format!("metric: {m}"),
        UserRequest::FreeText(t) => t.clone(),
    }
}
