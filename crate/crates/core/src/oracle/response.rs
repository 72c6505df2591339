use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::log::{parse_training_log, LogError, TrainingLog};
use crate::cards::{is_ident, HyperParamConfig, ParamValue};

pub const DATA_PROCESSING_HEADER: &str = "## Data Processing";
pub const ARCHITECTURE_HEADER: &str = "## Model Architecture";
pub const HYPERPARAMETERS_HEADER: &str = "## Hyperparameter Tuning";
pub const LOG_HEADER: &str = "## Predicted Training Log";

pub const RESPONSE_HEADERS: [&str; 4] = [
    DATA_PROCESSING_HEADER,
    ARCHITECTURE_HEADER,
    HYPERPARAMETERS_HEADER,
    LOG_HEADER,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("response lacks the `{0}` section")]
    MissingSection(&'static str),
    #[error("response repeats the `{0}` section")]
    DuplicateSection(&'static str),
    #[error("hyperparameter section has no `name: value` lines")]
    EmptyHyperparameters,
    #[error("predicted training log is empty")]
    EmptyLog,
    #[error("predicted training log: {0}")]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub data_processing: Vec<String>,
    pub architecture: String,
    pub hyperparameters: HyperParamConfig,
    pub predicted_log: TrainingLog,
    /// Numeric `name: value` lines of the architecture section, such as
    /// `fps` or `latency_ms`; constraints are checked against these.
    pub reported_metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub raw_text: String,
}

/// Splits `raw` on the four exact header lines; returns the body of each.
fn split_sections(raw: &str) -> Result<[String; 4], ResponseError> {
    let mut bodies: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in raw.lines() {
        let line = line.trim_end_matches('\r');
        if let Some(i) = RESPONSE_HEADERS.iter().position(|h| *h == line) {
            if bodies[i].is_some() {
                return Err(ResponseError::DuplicateSection(RESPONSE_HEADERS[i]));
            }
            bodies[i] = Some(String::new());
            current = Some(i);
            continue;
        }
        if let Some(i) = current {
            let body = bodies[i].as_mut().expect("section opened");
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut out: [String; 4] = Default::default();
    for (i, body) in bodies.into_iter().enumerate() {
        out[i] = body.ok_or(ResponseError::MissingSection(RESPONSE_HEADERS[i]))?;
    }
    Ok(out)
}

/// `name: value` with a lowercase identifier name and non-empty value.
fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (name, value) = line.split_once(": ")?;
    (is_ident(name) && !value.trim().is_empty()).then_some((name, value.trim()))
}

pub fn parse_response(raw: &str) -> Result<BackendResponse, ResponseError> {
    let [dp, arch, hp, log] = split_sections(raw)?;

    let data_processing = dp
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.strip_prefix("- ").unwrap_or(l).trim().to_string())
        .collect();

    let architecture = arch.trim().to_string();
    let mut reported_metrics = BTreeMap::new();
    for line in architecture.lines() {
        if let Some((name, value)) = split_assignment(line) {
            if let Some(x) = ParamValue::parse_token(value).as_f64() {
                reported_metrics.insert(name.to_string(), x);
            }
        }
    }

    let mut hyperparameters = HyperParamConfig::new();
    let mut warnings = Vec::new();
    for line in hp.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match split_assignment(line) {
            Some((name, value)) => hyperparameters.insert(name, ParamValue::parse_token(value)),
            None => warnings.push(format!("unparsed hyperparameter line: {}", line.trim())),
        }
    }
    if hyperparameters.is_empty() {
        return Err(ResponseError::EmptyHyperparameters);
    }

    let predicted_log = parse_training_log(&log)?;
    if predicted_log.is_empty() {
        return Err(ResponseError::EmptyLog);
    }

    Ok(BackendResponse {
        data_processing,
        architecture,
        hyperparameters,
        predicted_log,
        reported_metrics,
        warnings,
        raw_text: raw.to_string(),
    })
}
