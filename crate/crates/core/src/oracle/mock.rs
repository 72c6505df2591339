//! Deterministic stand-in backend (`mock-v1`).
//!
//! The response is a pure function of the prompt text. Performance follows a
//! closed-form surface in the learning rate only:
//!
//! ```text
//! S(lr)  = max(0, 0.95 - 0.15 * (log10 lr - log10 lr*)^2)
//! lr*    = 10^-(3 + FNV-1a-64(dataset name) mod 3)
//! val_metric(e) = S * (1 - exp(-e/4)),  train_loss(e) = exp(-e/3),
//! val_loss(e)   = 1 - val_metric(e),    e = 1..=12
//! ```

use super::log::{LogEntry, TrainingLog};
use super::response::{ARCHITECTURE_HEADER, DATA_PROCESSING_HEADER, HYPERPARAMETERS_HEADER, LOG_HEADER};
use super::{Backend, BackendError};
use crate::cards::{fmt_float, InputType, ParamValue};
use crate::composer::{
    PromptParagraph, DATA_HEADER, EVAL_HEADER, LOG_HEADER as PROMPT_LOG_HEADER, MODEL_HEADER, REQUESTS_HEADER,
    TASK_HEADER,
};
use crate::encoder::fnv1a64;

pub const MOCK_ID: &str = "mock-v1";
pub const MOCK_EPOCHS: u32 = 12;
pub const PEAK_SCORE: f64 = 0.95;
pub const CURVATURE: f64 = 0.15;
/// One log-space step of the learning rate, in decades.
pub const LR_STEP_DECADES: f64 = 0.25;

const LR_NAMES: [&str; 2] = ["learning_rate", "lr"];

pub fn optimal_lr(dataset_name: &str) -> f64 {
    let exponent = 3 + fnv1a64(dataset_name.as_bytes()) % 3;
    10f64.powi(-(exponent as i32))
}

/// Surface height for a learning rate; without one the surface is flat at
/// its peak.
pub fn surface_score(dataset_name: &str, lr: Option<f64>) -> f64 {
    match lr {
        None => PEAK_SCORE,
        Some(lr) if lr > 0.0 => {
            let d = lr.log10() - optimal_lr(dataset_name).log10();
            (PEAK_SCORE - CURVATURE * d * d).max(0.0)
        }
        Some(_) => 0.0,
    }
}

pub fn surface_log(score: f64) -> TrainingLog {
    let entries = (1..=MOCK_EPOCHS)
        .map(|e| {
            let t = f64::from(e);
            let val_metric = score * (1.0 - (-t / 4.0).exp());
            LogEntry {
                epoch: e,
                train_loss: (-t / 3.0).exp(),
                val_loss: 1.0 - val_metric,
                val_metric,
            }
        })
        .collect();
    TrainingLog::new(entries).expect("surface log is well formed")
}

/// Frame rate the mock reports for a model; at least 12.
pub fn model_fps(model_name: &str) -> u64 {
    12 + fnv1a64(model_name.as_bytes()) % 37
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl Backend for MockBackend {
    fn id(&self) -> &str {
        MOCK_ID
    }

    fn complete(&self, prompt: &PromptParagraph) -> Result<String, BackendError> {
        mock_complete(&prompt.text)
    }
}

struct PromptParam {
    name: String,
    kind: String,
    domain: Option<(f64, f64)>,
    default: String,
}

struct PromptFacts {
    data_name: String,
    input_type: InputType,
    model_name: String,
    structure: String,
    params: Vec<PromptParam>,
    revise: bool,
}

fn malformed(msg: impl Into<String>) -> BackendError {
    BackendError::MalformedPrompt(msg.into())
}

fn parse_param_line(line: &str) -> Result<PromptParam, BackendError> {
    let body = line.strip_prefix("- ").ok_or_else(|| malformed(line))?;
    let (name, rest) = body
        .split_once(": kind=")
        .ok_or_else(|| malformed(format!("bad hyperparameter line `{line}`")))?;
    let (kind, rest) = rest.split_once(' ').ok_or_else(|| malformed(line))?;
    let (domain, rest) = match rest.strip_prefix("domain=[") {
        Some(r) => {
            let (inner, r) = r.split_once("] ").ok_or_else(|| malformed(line))?;
            let (lo, hi) = inner.split_once(", ").ok_or_else(|| malformed(line))?;
            let lo: f64 = lo.parse().map_err(|_| malformed(line))?;
            let hi: f64 = hi.parse().map_err(|_| malformed(line))?;
            (Some((lo, hi)), r)
        }
        None => (None, rest),
    };
    let rest = rest.strip_prefix("default=").ok_or_else(|| malformed(line))?;
    let cut = rest.rfind(" flexibility=").ok_or_else(|| malformed(line))?;
    Ok(PromptParam {
        name: name.to_string(),
        kind: kind.to_string(),
        domain,
        default: rest[..cut].to_string(),
    })
}

fn read_prompt(text: &str) -> Result<PromptFacts, BackendError> {
    let mut section = "";
    let mut seen: Vec<&str> = Vec::new();
    let mut data_name = None;
    let mut input_type = None;
    let mut model_name = None;
    let mut structure = String::new();
    let mut params = Vec::new();
    let mut revise = false;
    for line in text.lines() {
        let header = [
            TASK_HEADER,
            DATA_HEADER,
            MODEL_HEADER,
            EVAL_HEADER,
            PROMPT_LOG_HEADER,
            REQUESTS_HEADER,
        ]
        .into_iter()
        .find(|h| line.starts_with(h));
        if let Some(h) = header {
            section = h;
            seen.push(h);
            if h == PROMPT_LOG_HEADER || (h == REQUESTS_HEADER && line.trim_end() != "REQUESTS: none") {
                revise = true;
            }
            continue;
        }
        if section == DATA_HEADER {
            if let Some(v) = line.strip_prefix("name: ") {
                data_name.get_or_insert_with(|| v.to_string());
            } else if let Some(v) = line.strip_prefix("input_type: ") {
                input_type = InputType::parse(v);
            }
        } else if section == MODEL_HEADER {
            if let Some(v) = line.strip_prefix("name: ") {
                model_name.get_or_insert_with(|| v.to_string());
            } else if let Some(v) = line.strip_prefix("structure: ") {
                structure = v.to_string();
            } else if line.starts_with("- ") {
                params.push(parse_param_line(line)?);
            }
        }
    }
    for h in [TASK_HEADER, DATA_HEADER, MODEL_HEADER, EVAL_HEADER, REQUESTS_HEADER] {
        if !seen.contains(&h) {
            return Err(malformed(format!("missing `{h}` section")));
        }
    }
    Ok(PromptFacts {
        data_name: data_name.ok_or_else(|| malformed("data card has no name"))?,
        input_type: input_type.ok_or_else(|| malformed("data card has no input type"))?,
        model_name: model_name.ok_or_else(|| malformed("model card has no name"))?,
        structure,
        params,
        revise,
    })
}

fn processing_steps(input_type: InputType) -> [&'static str; 3] {
    match input_type {
        InputType::Image => ["resize", "normalize", "augment"],
        InputType::Text => ["tokenize", "lowercase", "remove_stopwords"],
        InputType::Tabular => ["impute", "standardize", "encode_categoricals"],
    }
}

/// One log-space step from `lr` toward `target`, never passing it, kept
/// inside `domain`.
pub fn step_toward(lr: f64, target: f64, domain: Option<(f64, f64)>) -> f64 {
    let (a, b) = (lr.log10(), target.log10());
    let next = if (b - a).abs() <= LR_STEP_DECADES {
        target
    } else {
        10f64.powf(a + LR_STEP_DECADES * (b - a).signum())
    };
    match domain {
        Some((lo, hi)) => next.clamp(lo, hi),
        None => next,
    }
}

pub fn mock_complete(prompt_text: &str) -> Result<String, BackendError> {
    let facts = read_prompt(prompt_text)?;
    let mut lr = None;
    let mut lines = Vec::new();
    for p in &facts.params {
        let mut value = p.default.clone();
        if LR_NAMES.contains(&p.name.as_str()) && p.kind.starts_with("continuous") {
            let current = match ParamValue::parse_token(&p.default).as_f64() {
                Some(x) if x > 0.0 => x,
                _ => return Err(malformed(format!("`{}` default is not positive", p.name))),
            };
            let chosen = if facts.revise {
                step_toward(current, optimal_lr(&facts.data_name), p.domain)
            } else {
                current
            };
            if lr.is_none() {
                lr = Some(chosen);
            }
            value = fmt_float(chosen);
        }
        lines.push(format!("{}: {}", p.name, value));
    }
    let log = surface_log(surface_score(&facts.data_name, lr));
    let fps = model_fps(&facts.model_name);

    let mut out = String::new();
    out.push_str(DATA_PROCESSING_HEADER);
    out.push('\n');
    for step in processing_steps(facts.input_type) {
        out.push_str(&format!("- {step}\n"));
    }
    out.push_str(ARCHITECTURE_HEADER);
    out.push('\n');
    out.push_str(&format!("model: {}\n", facts.model_name));
    out.push_str(&format!("structure: {}\n", facts.structure));
    out.push_str(&format!("fps: {fps}\n"));
    out.push_str(&format!("latency_ms: {:.1}\n", 1000.0 / fps as f64));
    out.push_str(HYPERPARAMETERS_HEADER);
    out.push('\n');
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out.push_str(LOG_HEADER);
    out.push('\n');
    out.push_str(&log.serialize());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cards::{parse_data_card, parse_model_card};
    use crate::composer::{compose_prompt, UserRequest};
    use crate::oracle::parse_response;

    fn prompt(name: &str, lr: &str, requests: &[UserRequest]) -> PromptParagraph {
        let data = parse_data_card(
            format!(
                r#"{{"name":"{name}","input_type":"image","label_space":["cat","dog"],
                "task_description":"classify pets","eval_metrics":["accuracy"]}}"#
            )
            .as_bytes(),
        )
        .unwrap();
        let model = parse_model_card(
            format!(
                r#"{{"name":"vit-base","structure":"ViT-B/16","description":"vision transformer","arch_hparams":{{
              "learning_rate":{{"kind":"continuous_log","domain":[1e-6,1e-1],"default":{lr},"flexibility":"tunable"}},
              "epochs":{{"kind":"integer","domain":[1,300],"default":90,"flexibility":"tunable"}}}}}}"#
            )
            .as_bytes(),
        )
        .unwrap();
        compose_prompt(&data, &model, requests)
    }

    #[test]
    fn optimum_follows_name_hash() {
        // reference script: FNV-1a-64("coco") mod 3 == 1
        assert_eq!(optimal_lr("coco"), 1e-4);
        assert_eq!(optimal_lr("uci-adult"), 1e-3);
        assert_eq!(optimal_lr("COCO"), 1e-5);
    }

    #[test]
    fn final_metric_at_and_off_optimum() {
        let at = parse_response(&mock_complete(&prompt("coco", "1e-4", &[]).text).unwrap()).unwrap();
        assert_eq!(at.predicted_log.len(), 12);
        assert_eq!(at.predicted_log.final_metric(), Some(0.9027));
        let off = parse_response(&mock_complete(&prompt("coco", "1e-3", &[]).text).unwrap()).unwrap();
        assert_eq!(off.predicted_log.final_metric(), Some(0.7602));
        assert_eq!(off.data_processing, ["resize", "normalize", "augment"]);
        assert_eq!(off.hyperparameters.get("epochs"), Some(&ParamValue::Int(90)));
    }

    #[test]
    fn deterministic() {
        let p = prompt("coco", "1e-2", &[]);
        assert_eq!(mock_complete(&p.text).unwrap(), mock_complete(&p.text).unwrap());
    }

    #[test]
    fn requests_step_toward_optimum() {
        let p = prompt("coco", "0.01", &[UserRequest::classify("make it better")]);
        let r = parse_response(&mock_complete(&p.text).unwrap()).unwrap();
        let lr = r.hyperparameters.get_f64("learning_rate").unwrap();
        assert!((lr.log10() + 2.25).abs() < 1e-12);
        // close to the optimum the step lands exactly on it
        let p = prompt("coco", "0.00012", &[UserRequest::classify("x")]);
        let r = parse_response(&mock_complete(&p.text).unwrap()).unwrap();
        assert_eq!(r.hyperparameters.get_f64("learning_rate"), Some(1e-4));
    }

    #[test]
    fn missing_section_is_malformed() {
        let p = prompt("coco", "1e-4", &[]);
        let cut = p.text.find("REQUESTS:").unwrap();
        assert!(matches!(
            mock_complete(&p.text[..cut]),
            Err(BackendError::MalformedPrompt(_))
        ));
    }

    #[test]
    fn surface_is_maximal_at_optimum() {
        for name in ["coco", "uci-adult", "COCO"] {
            let star = optimal_lr(name);
            let peak = surface_score(name, Some(star));
            for i in 0..=20 {
                let lr = 10f64.powf(-6.0 + 0.25 * i as f64);
                assert!(surface_score(name, Some(lr)) <= peak);
            }
            assert_eq!(peak, PEAK_SCORE);
        }
    }
}
