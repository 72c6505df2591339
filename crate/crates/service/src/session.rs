//! One interactive tuning conversation and its state machine.

use cardtune::cards::{DataCard, ModelCard};
use cardtune::composer::{compose_prompt, PromptParagraph, UserRequest};
use cardtune::encoder::Embedder;
use cardtune::oracle::Backend;
use cardtune::pipeline::{run_followup, run_recommend, Outcome, PipelineError};
use cardtune::registry::Registry;
use cardtune::transfer::{TransferParams, DEFAULT_K, DEFAULT_TAU};
use cardtune::tuner::Constraint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BUDGET: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Empty,
    CardsSet,
    Recommended,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Empty => "empty",
            SessionState::CardsSet => "cards_set",
            SessionState::Recommended => "recommended",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Mock,
    Http,
}

/// Knobs of a recommendation run, kept for the follow-ups that revise it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub backend: BackendChoice,
    pub k: usize,
    pub tau: f64,
    pub budget: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            backend: BackendChoice::Mock,
            k: DEFAULT_K,
            tau: DEFAULT_TAU,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl RunSettings {
    pub fn transfer(&self) -> TransferParams {
        TransferParams {
            k: self.k,
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// `None` for a recommendation, the parsed request for a follow-up.
    pub request: Option<UserRequest>,
    /// Constraints in force for this round.
    pub constraints: Vec<Constraint>,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session is `{actual}`, expected {expected}")]
    WrongState {
        expected: &'static str,
        actual: &'static str,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub state: SessionState,
    pub data_card: Option<DataCard>,
    pub model_card: Option<ModelCard>,
    pub prompt: Option<PromptParagraph>,
    pub settings: Option<RunSettings>,
    /// Accumulated constraints from accepted follow-ups.
    pub constraints: Vec<Constraint>,
    pub history: Vec<HistoryEntry>,
    /// UTC seconds.
    pub created_at: i64,
}

impl Session {
    pub fn new(id: String, created_at: i64) -> Session {
        Session {
            id,
            state: SessionState::Empty,
            data_card: None,
            model_card: None,
            prompt: None,
            settings: None,
            constraints: Vec::new(),
            history: Vec::new(),
            created_at,
        }
    }

    fn wrong(&self, expected: &'static str) -> SessionError {
        SessionError::WrongState {
            expected,
            actual: self.state.as_str(),
        }
    }

    fn cards(&self) -> Result<(&DataCard, &ModelCard), SessionError> {
        match (&self.data_card, &self.model_card) {
            (Some(d), Some(m)) => Ok((d, m)),
            _ => Err(self.wrong("cards_set or recommended")),
        }
    }

    /// Stores the cards and derives their prompt. Allowed until the first
    /// recommendation.
    pub fn set_cards(&mut self, data: DataCard, model: ModelCard) -> Result<&PromptParagraph, SessionError> {
        if self.state == SessionState::Recommended {
            return Err(self.wrong("empty or cards_set"));
        }
        let prompt = compose_prompt(&data, &model, &[]);
        self.data_card = Some(data);
        self.model_card = Some(model);
        self.state = SessionState::CardsSet;
        Ok(self.prompt.insert(prompt))
    }

    /// Transfer then tune under the accumulated constraints. A failure
    /// leaves the session untouched.
    pub fn recommend(
        &mut self,
        settings: RunSettings,
        registry: &Registry,
        embedder: &dyn Embedder,
        backend: &dyn Backend,
    ) -> Result<&HistoryEntry, SessionError> {
        let (data, model) = self.cards()?;
        let outcome = run_recommend(
            data,
            model,
            registry,
            embedder,
            backend,
            settings.transfer(),
            &self.constraints,
            settings.budget,
        )?;
        self.settings = Some(settings);
        self.state = SessionState::Recommended;
        self.history.push(HistoryEntry {
            request: None,
            constraints: self.constraints.clone(),
            outcome,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Classifies `text`, sends the follow-up and re-tunes. A constraint is
    /// kept for later rounds only when this round succeeds.
    pub fn post_request(&mut self, text: &str, backend: &dyn Backend) -> Result<&HistoryEntry, SessionError> {
        if self.state != SessionState::Recommended {
            return Err(self.wrong("recommended"));
        }
        let (data, model) = self.cards()?;
        let last = self.history.last().expect("recommended sessions have history");
        let settings = self.settings.unwrap_or_default();
        let request = UserRequest::classify(text);
        let mut constraints = self.constraints.clone();
        if let Some(c) = request.as_constraint() {
            constraints.push(c.clone());
        }
        let outcome = run_followup(
            data,
            model,
            &last.outcome.recommendation,
            &last.outcome.predicted_log,
            &request,
            backend,
            &constraints,
            settings.budget,
        )?;
        self.constraints = constraints.clone();
        self.history.push(HistoryEntry {
            request: Some(request),
            constraints,
            outcome,
        });
        Ok(self.history.last().expect("just pushed"))
    }
}
