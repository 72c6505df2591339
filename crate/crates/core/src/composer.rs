//! Fixed-format prompt rendering.
//!
//! A prompt is a sequence of line-oriented sections in fixed order:
//! `TASK`, `DATA CARD`, `MODEL CARD`, `EVALUATION`, optionally `LOG`
//! (follow-ups only), and `REQUESTS`. Every substituted card field is
//! recorded as a span so callers can map text back to the card.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::{canon_text, fmt_float, DataCard, LabelSpace, ModelCard, ParamDomain};
use crate::oracle::TrainingLog;
use crate::tuner::{parse_constraint, Constraint};

pub const TASK_HEADER: &str = "TASK:";
pub const DATA_HEADER: &str = "DATA CARD:";
pub const MODEL_HEADER: &str = "MODEL CARD:";
pub const EVAL_HEADER: &str = "EVALUATION:";
pub const LOG_HEADER: &str = "LOG:";
pub const REQUESTS_HEADER: &str = "REQUESTS:";

const TASK_TEXT: &str = "Plan the data processing, design the model architecture, tune the \
hyperparameters and predict the training log for the dataset and model described below. \
Answer with the sections Data Processing, Model Architecture, Hyperparameter Tuning and \
Predicted Training Log.";

const FOLLOWUP_TASK_TEXT: &str = "Revise the hyperparameters for the dataset and model \
described below using the predicted training log and the new request. Answer with the \
sections Data Processing, Model Architecture, Hyperparameter Tuning and Predicted Training Log.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub field: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptParagraph {
    pub text: String,
    pub spans: Vec<Span>,
}

impl PromptParagraph {
    pub fn span(&self, field: &str) -> Option<&Span> {
        self.spans.iter().find(|s| s.field == field)
    }

    pub fn field_text(&self, field: &str) -> Option<&str> {
        self.span(field).map(|s| &self.text[s.range()])
    }

    /// Byte range of a section, from its header line up to the next header.
    pub fn section_range(&self, header: &str) -> Option<Range<usize>> {
        let starts = header_offsets(&self.text);
        let i = starts.iter().position(|(h, _)| *h == header)?;
        let start = starts[i].1;
        let end = starts.get(i + 1).map_or(self.text.len(), |(_, o)| *o);
        Some(start..end)
    }
}

impl fmt::Display for PromptParagraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

const HEADERS: &[&str] = &[
    TASK_HEADER,
    DATA_HEADER,
    MODEL_HEADER,
    EVAL_HEADER,
    LOG_HEADER,
    REQUESTS_HEADER,
];

/// (header, byte offset of the line) for every section header line.
fn header_offsets(text: &str) -> Vec<(&'static str, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some(h) = HEADERS.iter().find(|h| line.starts_with(**h)) {
            out.push((*h, offset));
        }
        offset += line.len();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum UserRequest {
    Constraint(Constraint),
    MetricAddition(String),
    FreeText(String),
}

impl UserRequest {
    /// Grammar-driven classification: a constraint if the text parses under
    /// the constraint grammar, a metric addition for `metric: <ident>`,
    /// otherwise free text (whitespace-collapsed).
    pub fn classify(text: &str) -> UserRequest {
        if let Ok(c) = parse_constraint(text) {
            return UserRequest::Constraint(c);
        }
        let t = canon_text(text);
        if let Some(rest) = t.strip_prefix("metric:") {
            let name = rest.trim();
            if crate::cards::is_ident(name) {
                return UserRequest::MetricAddition(name.to_string());
            }
        }
        UserRequest::FreeText(t)
    }

    pub fn as_constraint(&self) -> Option<&Constraint> {
        match self {
            UserRequest::Constraint(c) => Some(c),
            _ => None,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            UserRequest::Constraint(_) => "constraint",
            UserRequest::MetricAddition(_) => "metric",
            UserRequest::FreeText(_) => "request",
        }
    }

    fn body(&self) -> String {
        match self {
            UserRequest::Constraint(c) => c.to_string(),
            UserRequest::MetricAddition(m) => m.clone(),
            UserRequest::FreeText(t) => canon_text(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("training log is empty")]
    EmptyLog,
    #[error("previous prompt lacks the `{0}` section")]
    MissingSection(&'static str),
}

struct Builder {
    text: String,
    spans: Vec<Span>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            text: String::new(),
            spans: Vec::new(),
        }
    }

    fn lit(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self
    }

    fn field(&mut self, path: impl Into<String>, value: &str) -> &mut Self {
        let start = self.text.len();
        self.text.push_str(value);
        self.spans.push(Span {
            field: path.into(),
            start,
            end: self.text.len(),
        });
        self
    }

    fn finish(self) -> PromptParagraph {
        PromptParagraph {
            text: self.text,
            spans: self.spans,
        }
    }
}

fn write_data_card(b: &mut Builder, data: &DataCard) {
    b.lit(DATA_HEADER).lit("\n");
    b.lit("name: ").field("data.name", &data.name).lit("\n");
    b.lit("input_type: ")
        .field("data.input_type", data.input_type.as_str())
        .lit("\n");
    match &data.label_space {
        LabelSpace::Classes(classes) => {
            b.lit(&format!("label_space ({} classes):\n", classes.len()));
            for (i, c) in classes.iter().enumerate() {
                b.lit("- ").field(format!("data.label_space[{i}]"), c).lit("\n");
            }
        }
        LabelSpace::Description(d) => {
            b.lit("label_space (description): ")
                .field("data.label_space", d)
                .lit("\n");
        }
    }
    match data.scale {
        Some(n) => {
            b.lit("scale: ").field("data.scale", &n.to_string()).lit("\n");
        }
        None => {
            b.lit("scale: unspecified\n");
        }
    }
    b.lit("task_description: ")
        .field("data.task_description", &data.task_description)
        .lit("\n");
}

fn write_model_card(b: &mut Builder, model: &ModelCard) {
    b.lit(MODEL_HEADER).lit("\n");
    b.lit("name: ").field("model.name", &model.name).lit("\n");
    b.lit("structure: ")
        .field("model.structure", &model.structure)
        .lit("\n");
    b.lit("description: ")
        .field("model.description", &model.description)
        .lit("\n");
    b.lit(&format!("arch_hparams ({}):\n", model.arch_hparams.len()));
    for spec in model.arch_hparams.iter() {
        let p = format!("model.arch_hparams.{}", spec.name);
        b.lit("- ").field(format!("{p}.name"), &spec.name).lit(": kind=");
        b.field(format!("{p}.kind"), spec.kind().as_str());
        match &spec.domain {
            ParamDomain::Linear { min, max } | ParamDomain::Log { min, max } => {
                b.lit(" domain=[")
                    .field(format!("{p}.domain.min"), &fmt_float(*min))
                    .lit(", ")
                    .field(format!("{p}.domain.max"), &fmt_float(*max))
                    .lit("]");
            }
            ParamDomain::Integer { min, max } => {
                b.lit(" domain=[")
                    .field(format!("{p}.domain.min"), &min.to_string())
                    .lit(", ")
                    .field(format!("{p}.domain.max"), &max.to_string())
                    .lit("]");
            }
            ParamDomain::Categorical(_) => {}
        }
        b.lit(" default=")
            .field(format!("{p}.default"), &spec.default.to_string())
            .lit(" flexibility=")
            .field(format!("{p}.flexibility"), spec.flexibility.as_str())
            .lit("\n");
        if let ParamDomain::Categorical(options) = &spec.domain {
            for (i, o) in options.iter().enumerate() {
                b.lit("  - option: ").field(format!("{p}.domain[{i}]"), o).lit("\n");
            }
        }
    }
}

fn write_evaluation(b: &mut Builder, data: &DataCard) {
    b.lit(EVAL_HEADER).lit("\n");
    for (i, m) in data.eval_metrics.iter().enumerate() {
        b.lit("- ").field(format!("data.eval_metrics[{i}]"), m).lit("\n");
    }
}

fn write_requests(b: &mut Builder, requests: &[UserRequest], index_offset: usize) {
    if requests.is_empty() {
        b.lit(REQUESTS_HEADER).lit(" none\n");
        return;
    }
    b.lit(REQUESTS_HEADER).lit("\n");
    for (i, r) in requests.iter().enumerate() {
        b.lit("- ")
            .lit(r.label())
            .lit(": ")
            .field(format!("requests[{}]", i + index_offset), &r.body())
            .lit("\n");
    }
}

/// Renders the prompt for a pair of (already canonical) cards.
pub fn compose_prompt(data: &DataCard, model: &ModelCard, requests: &[UserRequest]) -> PromptParagraph {
    let mut b = Builder::new();
    b.lit(TASK_HEADER).lit(" ").lit(TASK_TEXT).lit("\n");
    write_data_card(&mut b, data);
    write_model_card(&mut b, model);
    write_evaluation(&mut b, data);
    write_requests(&mut b, requests, 0);
    b.finish()
}

/// Renders the one-line summary of the final epoch used in `LOG` sections.
pub fn log_summary(log: &TrainingLog) -> Option<String> {
    log.last().map(|e| e.to_line())
}

/// Follow-up prompt: the card and evaluation sections of `previous` carried
/// over verbatim, a `LOG` line with the final epoch of `log`, and a
/// `REQUESTS` section holding only `new_request`.
pub fn compose_followup(
    previous: &PromptParagraph,
    log: &TrainingLog,
    new_request: &UserRequest,
) -> Result<PromptParagraph, ComposeError> {
    let summary = log_summary(log).ok_or(ComposeError::EmptyLog)?;
    let data = previous
        .section_range(DATA_HEADER)
        .ok_or(ComposeError::MissingSection(DATA_HEADER))?;
    let eval = previous
        .section_range(EVAL_HEADER)
        .ok_or(ComposeError::MissingSection(EVAL_HEADER))?;
    previous
        .section_range(MODEL_HEADER)
        .ok_or(ComposeError::MissingSection(MODEL_HEADER))?;
    let carried = data.start..eval.end;

    let mut b = Builder::new();
    b.lit(TASK_HEADER).lit(" ").lit(FOLLOWUP_TASK_TEXT).lit("\n");
    let shift = b.text.len() as isize - carried.start as isize;
    b.lit(&previous.text[carried.clone()]);
    b.spans.extend(
        previous
            .spans
            .iter()
            .filter(|s| s.start >= carried.start && s.end <= carried.end)
            .map(|s| Span {
                field: s.field.clone(),
                start: (s.start as isize + shift) as usize,
                end: (s.end as isize + shift) as usize,
            }),
    );
    b.lit(LOG_HEADER).lit(" ").field("log.final", &summary).lit("\n");
    write_requests(&mut b, std::slice::from_ref(new_request), 0);
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cards::{parse_data_card, parse_model_card};
    use crate::oracle::LogEntry;

    fn cards() -> (DataCard, ModelCard) {
        let data = parse_data_card(
            br#"{"name":"pets","input_type":"image","label_space":["dog","cat"],"scale":5000,
                "task_description":"classify pets","eval_metrics":["accuracy","top5"]}"#,
        )
        .unwrap();
        let model = parse_model_card(
            br#"{"name":"vit-base","structure":"ViT-B/16 with linear head","description":"vision transformer",
            "arch_hparams":{
              "learning_rate":{"kind":"continuous_log","domain":[1e-6,1e-1],"default":1e-4,"flexibility":"tunable"},
              "optimizer":{"kind":"categorical","domain":["adamw","sgd"],"default":"adamw","flexibility":"fixed"}}}"#,
        )
        .unwrap();
        (data, model)
    }

    fn log(n: u32) -> TrainingLog {
        TrainingLog::new(
            (1..=n)
                .map(|e| LogEntry {
                    epoch: e,
                    train_loss: 1.0 / e as f64,
                    val_loss: 1.2 / e as f64,
                    val_metric: 0.5,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sections_in_fixed_order() {
        let (d, m) = cards();
        let p = compose_prompt(&d, &m, &[]);
        let order: Vec<_> = header_offsets(&p.text).into_iter().map(|(h, _)| h).collect();
        assert_eq!(
            order,
            [TASK_HEADER, DATA_HEADER, MODEL_HEADER, EVAL_HEADER, REQUESTS_HEADER]
        );
        assert!(p.text.ends_with("REQUESTS: none\n"));
    }

    #[test]
    fn spans_match_fields_and_ascend() {
        let (d, m) = cards();
        let p = compose_prompt(&d, &m, &[UserRequest::classify("fps >= 10")]);
        for w in p.spans.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        assert_eq!(p.field_text("data.name"), Some("pets"));
        assert_eq!(p.field_text("data.scale"), Some("5000"));
        assert_eq!(p.field_text("data.label_space[1]"), Some("cat"));
        assert_eq!(p.field_text("model.arch_hparams.learning_rate.default"), Some("0.0001"));
        assert_eq!(p.field_text("model.arch_hparams.optimizer.domain[1]"), Some("sgd"));
        assert_eq!(p.field_text("requests[0]"), Some("fps >= 10"));
    }

    #[test]
    fn requests_only_change_the_requests_section() {
        let (d, m) = cards();
        let plain = compose_prompt(&d, &m, &[]);
        let req = UserRequest::classify("fast inference time for DPR retriever");
        assert_eq!(
            req,
            UserRequest::FreeText("fast inference time for DPR retriever".into())
        );
        let with = compose_prompt(&d, &m, &[req]);
        let cut = plain.section_range(REQUESTS_HEADER).unwrap().start;
        assert_eq!(&plain.text[..cut], &with.text[..cut]);
        assert_eq!(with.section_range(REQUESTS_HEADER).unwrap().start, cut);
        assert!(with.text[cut..].contains("- request: fast inference time for DPR retriever\n"));
    }

    #[test]
    fn followup_carries_sections_and_adds_log() {
        let (d, m) = cards();
        let first = compose_prompt(&d, &m, &[]);
        let req = UserRequest::classify("latency_ms <= 100 ms");
        let f = compose_followup(&first, &log(12), &req).unwrap();
        let carried = |p: &PromptParagraph| {
            let r = p.section_range(DATA_HEADER).unwrap().start..p.section_range(EVAL_HEADER).unwrap().end;
            p.text[r].to_string()
        };
        assert_eq!(carried(&first), carried(&f));
        assert!(f.text.contains("\nLOG: epoch 12: train_loss=0.0833"));
        assert!(f.text.ends_with("REQUESTS:\n- constraint: latency_ms <= 100 ms\n"));
        assert_eq!(f.field_text("data.name"), Some("pets"));
        assert_eq!(compose_followup(&first, &log(12), &req).unwrap(), f);

        // a follow-up of a follow-up replaces the LOG section
        let g = compose_followup(&f, &log(3), &UserRequest::classify("fps >= 10")).unwrap();
        assert_eq!(g.text.matches("LOG:").count(), 1);
        assert!(g.text.contains("LOG: epoch 3:"));
    }

    #[test]
    fn followup_rejects_empty_log() {
        let (d, m) = cards();
        let first = compose_prompt(&d, &m, &[]);
        assert_eq!(
            compose_followup(&first, &TrainingLog::default(), &UserRequest::classify("x")),
            Err(ComposeError::EmptyLog)
        );
    }

    #[test]
    fn classify_requests() {
        assert!(matches!(UserRequest::classify("fps >= 10"), UserRequest::Constraint(_)));
        assert_eq!(
            UserRequest::classify("metric: top5_accuracy"),
            UserRequest::MetricAddition("top5_accuracy".into())
        );
        assert_eq!(
            UserRequest::classify("  make it\n faster "),
            UserRequest::FreeText("make it faster".into())
        );
    }
}
