//! Data cards, model cards and typed hyperparameter spaces.
//!
//! Cards arrive as strict JSON documents. Parsing walks the document by hand
//! so that every rejection carries the path of the offending field, and every
//! accepted card is canonicalized (whitespace collapsed, enum tokens
//! lowercased, class labels lowercased) before it is handed to the rest of
//! the system.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CardError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation at `{field}`: {message}")]
    SchemaViolation { field: String, message: String },
    #[error("invalid label space at `{field}`: {reason}")]
    EmptyLabelSpace { field: String, reason: String },
    #[error("default of `{field}` lies outside its domain")]
    DefaultOutOfDomain { field: String },
}

impl CardError {
    /// Stable machine-readable code, used by the HTTP error envelope.
    pub fn code(&self) -> &'static str {
        match self {
            CardError::MalformedDocument(_) => "malformed_document",
            CardError::SchemaViolation { .. } => "schema_violation",
            CardError::EmptyLabelSpace { .. } => "empty_label_space",
            CardError::DefaultOutOfDomain { .. } => "default_out_of_domain",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            CardError::MalformedDocument(_) => None,
            CardError::SchemaViolation { field, .. }
            | CardError::EmptyLabelSpace { field, .. }
            | CardError::DefaultOutOfDomain { field } => Some(field),
        }
    }
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> CardError {
    CardError::SchemaViolation {
        field: field.into(),
        message: message.into(),
    }
}

/// Trims and collapses internal whitespace runs to a single space.
pub fn canon_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical form of a class label: collapsed whitespace, lowercase.
pub fn canon_label(s: &str) -> String {
    canon_text(s).to_lowercase()
}

/// `[a-z_][a-z0-9_]*`
pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Shortest round-trip representation that always carries a `.` or an
/// exponent, so a float never reads back as an integer.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InputType {
    Image,
    Text,
    Tabular,
}

impl InputType {
    pub fn as_str(self) -> &'static str {
        match self {
            InputType::Image => "image",
            InputType::Text => "text",
            InputType::Tabular => "tabular",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token.trim().to_lowercase().as_str() {
            "image" => Some(InputType::Image),
            "text" => Some(InputType::Text),
            "tabular" => Some(InputType::Tabular),
            _ => None,
        }
    }
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Either an explicit list of classes or a prose description of the outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelSpace {
    Classes(Vec<String>),
    Description(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub struct DataCard {
    pub name: String,
    pub input_type: InputType,
    pub label_space: LabelSpace,
    pub scale: Option<u64>,
    pub task_description: String,
    pub eval_metrics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flexibility {
    Fixed,
    Tunable,
}

impl Flexibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Flexibility::Fixed => "fixed",
            Flexibility::Tunable => "tunable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    ContinuousLinear,
    ContinuousLog,
    Integer,
    Categorical,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::ContinuousLinear => "continuous_linear",
            ParamKind::ContinuousLog => "continuous_log",
            ParamKind::Integer => "integer",
            ParamKind::Categorical => "categorical",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token.trim().to_lowercase().as_str() {
            "continuous_linear" => Some(ParamKind::ContinuousLinear),
            "continuous_log" => Some(ParamKind::ContinuousLog),
            "integer" => Some(ParamKind::Integer),
            "categorical" => Some(ParamKind::Categorical),
            _ => None,
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Domain of a hyperparameter; the variant fixes the kind.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamDomain {
    Linear { min: f64, max: f64 },
    Log { min: f64, max: f64 },
    Integer { min: i64, max: i64 },
    Categorical(Vec<String>),
}

impl ParamDomain {
    pub fn kind(&self) -> ParamKind {
        match self {
            ParamDomain::Linear { .. } => ParamKind::ContinuousLinear,
            ParamDomain::Log { .. } => ParamKind::ContinuousLog,
            ParamDomain::Integer { .. } => ParamKind::Integer,
            ParamDomain::Categorical(_) => ParamKind::Categorical,
        }
    }

    /// Whether `value` has the right type for this domain and lies inside it.
    pub fn contains(&self, value: &ParamValue) -> bool {
        self.check(value).is_ok()
    }

    fn check(&self, value: &ParamValue) -> Result<(), ViolationReason> {
        match (self, value) {
            (ParamDomain::Linear { min, max } | ParamDomain::Log { min, max }, v) => {
                let x = match v {
                    ParamValue::Float(x) => *x,
                    ParamValue::Int(i) => *i as f64,
                    ParamValue::Text(_) => {
                        return Err(ViolationReason::KindMismatch {
                            expected: self.kind(),
                            found: v.type_name(),
                        })
                    }
                };
                if !x.is_finite() {
                    return Err(ViolationReason::NonFinite);
                }
                if x < *min || x > *max {
                    return Err(ViolationReason::OutOfDomain);
                }
                Ok(())
            }
            (ParamDomain::Integer { min, max }, ParamValue::Int(i)) => {
                if i < min || i > max {
                    Err(ViolationReason::OutOfDomain)
                } else {
                    Ok(())
                }
            }
            (ParamDomain::Categorical(options), ParamValue::Text(s)) => {
                if options.iter().any(|o| o == s) {
                    Ok(())
                } else {
                    Err(ViolationReason::NotACategory)
                }
            }
            (_, v) => Err(ViolationReason::KindMismatch {
                expected: self.kind(),
                found: v.type_name(),
            }),
        }
    }
}

/// A concrete hyperparameter value. Integers and floats are kept apart so
/// that `70` and `70.0` remain distinguishable through every round trip.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(x) => Some(*x),
            ParamValue::Text(_) => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::Int(_) => "integer",
            ParamValue::Float(_) => "float",
            ParamValue::Text(_) => "string",
        }
    }

    /// Reads a value token as written in a response line: integer, then
    /// float (scientific notation allowed), otherwise text.
    pub fn parse_token(token: &str) -> ParamValue {
        let t = token.trim();
        let digits = t.strip_prefix(['-', '+']).unwrap_or(t);
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(i) = t.parse::<i64>() {
                return ParamValue::Int(i);
            }
        }
        let numeric_start = digits.bytes().next().is_some_and(|b| b.is_ascii_digit() || b == b'.');
        if numeric_start {
            if let Ok(x) = t.parse::<f64>() {
                if x.is_finite() {
                    return ParamValue::Float(x);
                }
            }
        }
        ParamValue::Text(t.to_string())
    }

    fn to_json(&self) -> Value {
        match self {
            ParamValue::Int(i) => Value::from(*i),
            ParamValue::Float(x) => Value::from(*x),
            ParamValue::Text(s) => Value::from(s.clone()),
        }
    }

    fn from_json(v: &Value) -> Option<ParamValue> {
        match v {
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Some(ParamValue::Int(i))
                } else {
                    n.as_f64().map(ParamValue::Float)
                }
            }
            Value::String(s) => Some(ParamValue::Text(s.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => f.write_str(&fmt_float(*x)),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

impl Serialize for ParamValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ParamValue::Int(i) => s.serialize_i64(*i),
            ParamValue::Float(x) => s.serialize_f64(*x),
            ParamValue::Text(t) => s.serialize_str(t),
        }
    }
}

impl<'de> Deserialize<'de> for ParamValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        ParamValue::from_json(&v).ok_or_else(|| serde::de::Error::custom("expected a number or a string"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParamSpec {
    pub name: String,
    pub domain: ParamDomain,
    pub default: ParamValue,
    pub flexibility: Flexibility,
}

impl HyperParamSpec {
    pub fn kind(&self) -> ParamKind {
        self.domain.kind()
    }

    pub fn is_tunable(&self) -> bool {
        self.flexibility == Flexibility::Tunable
    }
}

/// Hyperparameter specs keyed by canonical name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HyperParamSpace(BTreeMap<String, HyperParamSpec>);

impl HyperParamSpace {
    pub fn new(specs: impl IntoIterator<Item = HyperParamSpec>) -> Self {
        HyperParamSpace(specs.into_iter().map(|s| (s.name.clone(), s)).collect())
    }

    pub fn get(&self, name: &str) -> Option<&HyperParamSpec> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &HyperParamSpec> {
        self.0.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn defaults(&self) -> HyperParamConfig {
        HyperParamConfig(self.0.iter().map(|(k, s)| (k.clone(), s.default.clone())).collect())
    }

    pub fn validate(&self, config: &HyperParamConfig) -> ValidationReport {
        validate_config(config, self)
    }

    /// Names of parameters the space defines but `config` lacks.
    pub fn missing_in(&self, config: &HyperParamConfig) -> Vec<String> {
        self.0.keys().filter(|k| config.get(k).is_none()).cloned().collect()
    }

    /// Fills every parameter missing from `config` with its default.
    pub fn complete(&self, config: &HyperParamConfig) -> HyperParamConfig {
        let mut out = config.clone();
        for (k, spec) in &self.0 {
            out.0.entry(k.clone()).or_insert_with(|| spec.default.clone());
        }
        out
    }
}

/// A concrete assignment of hyperparameter values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperParamConfig(pub BTreeMap<String, ParamValue>);

impl HyperParamConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn get_f64(&self, name: &str) -> Option<f64> {
        self.0.get(name).and_then(ParamValue::as_f64)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ParamValue) {
        self.0.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for HyperParamConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ViolationReason {
    UnknownParameter,
    KindMismatch { expected: ParamKind, found: &'static str },
    OutOfDomain,
    NotACategory,
    NonFinite,
}

impl Serialize for ParamKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationReason::UnknownParameter => f.write_str("no such hyperparameter"),
            ViolationReason::KindMismatch { expected, found } => {
                write!(f, "expected {expected} value, found {found}")
            }
            ViolationReason::OutOfDomain => f.write_str("value outside domain"),
            ViolationReason::NotACategory => f.write_str("value is not one of the categories"),
            ViolationReason::NonFinite => f.write_str("value is not finite"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub key: String,
    #[serde(flatten)]
    pub reason: ViolationReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.key, v.reason)?;
        }
        Ok(())
    }
}

/// Checks every key of `config` against `space`. Keys the space defines but
/// the config omits are not violations.
pub fn validate_config(config: &HyperParamConfig, space: &HyperParamSpace) -> ValidationReport {
    let violations = config
        .iter()
        .filter_map(|(key, value)| {
            let reason = match space.get(key) {
                None => ViolationReason::UnknownParameter,
                Some(spec) => spec.domain.check(value).err()?,
            };
            Some(Violation {
                key: key.clone(),
                reason,
            })
        })
        .collect();
    ValidationReport { violations }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub struct ModelCard {
    pub name: String,
    pub structure: String,
    pub description: String,
    pub arch_hparams: HyperParamSpace,
}

impl ModelCard {
    pub fn space(&self) -> &HyperParamSpace {
        &self.arch_hparams
    }

    /// Copy of this card whose defaults are replaced by the values in
    /// `config`. Used to pin a candidate configuration into a prompt.
    pub fn pinned(&self, config: &HyperParamConfig) -> ModelCard {
        let mut card = self.clone();
        for spec in card.arch_hparams.0.values_mut() {
            if let Some(v) = config.get(&spec.name) {
                spec.default = match (&spec.domain, v) {
                    (ParamDomain::Linear { .. } | ParamDomain::Log { .. }, ParamValue::Int(i)) => {
                        ParamValue::Float(*i as f64)
                    }
                    _ => v.clone(),
                };
            }
        }
        card
    }
}

// ---------------------------------------------------------------------------
// Document parsing

const DATA_CARD_KEYS: &[&str] = &[
    "name",
    "input_type",
    "label_space",
    "scale",
    "task_description",
    "eval_metrics",
];
const MODEL_CARD_KEYS: &[&str] = &["name", "structure", "description", "arch_hparams"];
const SPEC_KEYS: &[&str] = &["kind", "domain", "default", "flexibility"];

fn parse_json(document: &[u8]) -> Result<Value, CardError> {
    let text = std::str::from_utf8(document).map_err(|e| CardError::MalformedDocument(format!("not UTF-8: {e}")))?;
    serde_json::from_str(text).map_err(|e| CardError::MalformedDocument(e.to_string()))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, CardError> {
    v.as_object()
        .ok_or_else(|| schema(if path.is_empty() { "$" } else { path }, "expected an object"))
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], required: &[&str], prefix: &str) -> Result<(), CardError> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(schema(join_path(prefix, key), "unknown field"));
        }
    }
    for key in required {
        if !obj.contains_key(*key) {
            return Err(schema(join_path(prefix, key), "missing field"));
        }
    }
    Ok(())
}

fn join_path(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn string_field(v: &Value, path: &str) -> Result<String, CardError> {
    v.as_str()
        .map(canon_text)
        .ok_or_else(|| schema(path, "expected a string"))
}

fn non_empty_string(v: &Value, path: &str) -> Result<String, CardError> {
    let s = string_field(v, path)?;
    if s.is_empty() {
        return Err(schema(path, "must not be empty"));
    }
    Ok(s)
}

pub fn parse_data_card(document: &[u8]) -> Result<DataCard, CardError> {
    data_card_from_value(&parse_json(document)?)
}

pub fn data_card_from_value(v: &Value) -> Result<DataCard, CardError> {
    let obj = as_object(v, "")?;
    check_keys(
        obj,
        DATA_CARD_KEYS,
        &["name", "input_type", "label_space", "task_description", "eval_metrics"],
        "",
    )?;

    let name = non_empty_string(&obj["name"], "name")?;
    let input_type = obj["input_type"]
        .as_str()
        .ok_or_else(|| schema("input_type", "expected a string"))
        .and_then(|s| {
            InputType::parse(s).ok_or_else(|| {
                schema(
                    "input_type",
                    format!("unknown input type `{}` (expected image, text or tabular)", s.trim()),
                )
            })
        })?;

    let label_space = match &obj["label_space"] {
        Value::String(s) => {
            let text = canon_text(s);
            if text.is_empty() {
                return Err(CardError::EmptyLabelSpace {
                    field: "label_space".into(),
                    reason: "description is empty".into(),
                });
            }
            LabelSpace::Description(text)
        }
        Value::Array(items) => {
            if items.is_empty() {
                return Err(CardError::EmptyLabelSpace {
                    field: "label_space".into(),
                    reason: "class list is empty".into(),
                });
            }
            let mut seen = BTreeSet::new();
            let mut labels = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let path = format!("label_space[{i}]");
                let raw = item.as_str().ok_or_else(|| schema(&path, "expected a string"))?;
                let label = canon_label(raw);
                if label.is_empty() {
                    return Err(schema(path, "must not be empty"));
                }
                if !seen.insert(label.clone()) {
                    return Err(CardError::EmptyLabelSpace {
                        field: path,
                        reason: format!("duplicate label `{label}` after canonicalization"),
                    });
                }
                labels.push(label);
            }
            LabelSpace::Classes(labels)
        }
        _ => return Err(schema("label_space", "expected an array of strings or a string")),
    };

    let scale = match obj.get("scale") {
        None => None,
        Some(v) => match v.as_u64() {
            Some(n) if n > 0 => Some(n),
            _ => return Err(schema("scale", "expected a positive integer")),
        },
    };

    let task_description = string_field(&obj["task_description"], "task_description")?;

    let metrics = obj["eval_metrics"]
        .as_array()
        .ok_or_else(|| schema("eval_metrics", "expected an array of strings"))?;
    if metrics.is_empty() {
        return Err(schema("eval_metrics", "must list at least one metric"));
    }
    let mut seen = BTreeSet::new();
    let mut eval_metrics = Vec::with_capacity(metrics.len());
    for (i, m) in metrics.iter().enumerate() {
        let path = format!("eval_metrics[{i}]");
        let metric = non_empty_string(m, &path)?;
        if !seen.insert(metric.to_lowercase()) {
            return Err(schema(path, format!("duplicate metric `{metric}`")));
        }
        eval_metrics.push(metric);
    }

    Ok(DataCard {
        name,
        input_type,
        label_space,
        scale,
        task_description,
        eval_metrics,
    })
}

pub fn parse_model_card(document: &[u8]) -> Result<ModelCard, CardError> {
    model_card_from_value(&parse_json(document)?)
}

pub fn model_card_from_value(v: &Value) -> Result<ModelCard, CardError> {
    let obj = as_object(v, "")?;
    check_keys(obj, MODEL_CARD_KEYS, MODEL_CARD_KEYS, "")?;
    let name = non_empty_string(&obj["name"], "name")?;
    let structure = string_field(&obj["structure"], "structure")?;
    let description = string_field(&obj["description"], "description")?;

    let hparams = as_object(&obj["arch_hparams"], "arch_hparams")?;
    let mut specs = BTreeMap::new();
    for (raw_name, spec_value) in hparams {
        let canon = raw_name.trim().to_lowercase();
        let path = format!("arch_hparams.{}", raw_name.trim());
        if !is_ident(&canon) {
            return Err(schema(path, "hyperparameter names must match [a-z_][a-z0-9_]*"));
        }
        if specs.contains_key(&canon) {
            return Err(schema(path, "duplicate hyperparameter name"));
        }
        let spec = parse_spec(&canon, spec_value, &path)?;
        specs.insert(canon, spec);
    }

    Ok(ModelCard {
        name,
        structure,
        description,
        arch_hparams: HyperParamSpace(specs),
    })
}

fn parse_spec(name: &str, v: &Value, path: &str) -> Result<HyperParamSpec, CardError> {
    let obj = as_object(v, path)?;
    check_keys(obj, SPEC_KEYS, SPEC_KEYS, path)?;

    let kind_path = format!("{path}.kind");
    let kind = obj["kind"].as_str().and_then(ParamKind::parse).ok_or_else(|| {
        schema(
            &kind_path,
            "expected one of continuous_linear, continuous_log, integer, categorical",
        )
    })?;

    let flex_path = format!("{path}.flexibility");
    let flexibility = match obj["flexibility"].as_str().map(|s| s.trim().to_lowercase()) {
        Some(s) if s == "fixed" => Flexibility::Fixed,
        Some(s) if s == "tunable" => Flexibility::Tunable,
        _ => return Err(schema(flex_path, "expected `fixed` or `tunable`")),
    };

    let domain_path = format!("{path}.domain");
    let domain = parse_domain(kind, &obj["domain"], &domain_path)?;

    let default_path = format!("{path}.default");
    let default = match (&domain, &obj["default"]) {
        (ParamDomain::Linear { .. } | ParamDomain::Log { .. }, Value::Number(n)) => {
            ParamValue::Float(n.as_f64().unwrap_or(f64::NAN))
        }
        (ParamDomain::Integer { .. }, Value::Number(n)) if n.is_i64() => {
            ParamValue::Int(n.as_i64().unwrap_or_default())
        }
        (ParamDomain::Categorical(_), Value::String(s)) => ParamValue::Text(canon_text(s)),
        _ => return Err(schema(default_path, format!("default does not match kind {kind}"))),
    };
    if !domain.contains(&default) {
        return Err(CardError::DefaultOutOfDomain { field: default_path });
    }

    Ok(HyperParamSpec {
        name: name.to_string(),
        domain,
        default,
        flexibility,
    })
}

fn parse_domain(kind: ParamKind, v: &Value, path: &str) -> Result<ParamDomain, CardError> {
    let items = v.as_array().ok_or_else(|| schema(path, "expected an array"))?;
    match kind {
        ParamKind::Categorical => {
            if items.is_empty() {
                return Err(schema(path, "categorical domain must not be empty"));
            }
            let mut seen = BTreeSet::new();
            let mut options = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let p = format!("{path}[{i}]");
                let option = non_empty_string(item, &p)?;
                if !seen.insert(option.clone()) {
                    return Err(schema(p, format!("duplicate category `{option}`")));
                }
                options.push(option);
            }
            Ok(ParamDomain::Categorical(options))
        }
        ParamKind::Integer => {
            let [lo, hi] = items.as_slice() else {
                return Err(schema(path, "expected [min, max]"));
            };
            let (Some(min), Some(max)) = (lo.as_i64(), hi.as_i64()) else {
                return Err(schema(path, "integer bounds must be integers"));
            };
            if min >= max {
                return Err(schema(path, "min must be less than max"));
            }
            Ok(ParamDomain::Integer { min, max })
        }
        ParamKind::ContinuousLinear | ParamKind::ContinuousLog => {
            let [lo, hi] = items.as_slice() else {
                return Err(schema(path, "expected [min, max]"));
            };
            let (Some(min), Some(max)) = (lo.as_f64(), hi.as_f64()) else {
                return Err(schema(path, "bounds must be numbers"));
            };
            if !(min.is_finite() && max.is_finite()) || min >= max {
                return Err(schema(path, "min must be less than max"));
            }
            if kind == ParamKind::ContinuousLog {
                if min <= 0.0 {
                    return Err(schema(path, "continuous_log requires min > 0"));
                }
                Ok(ParamDomain::Log { min, max })
            } else {
                Ok(ParamDomain::Linear { min, max })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization

impl DataCard {
    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("name".into(), self.name.clone().into());
        obj.insert("input_type".into(), self.input_type.as_str().into());
        obj.insert(
            "label_space".into(),
            match &self.label_space {
                LabelSpace::Classes(c) => Value::from(c.clone()),
                LabelSpace::Description(d) => Value::from(d.clone()),
            },
        );
        if let Some(scale) = self.scale {
            obj.insert("scale".into(), scale.into());
        }
        obj.insert("task_description".into(), self.task_description.clone().into());
        obj.insert("eval_metrics".into(), Value::from(self.eval_metrics.clone()));
        Value::Object(obj)
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("card serializes")
    }

    /// Canonicalizes an in-memory card by rendering and re-parsing it.
    pub fn canonicalized(&self) -> Result<DataCard, CardError> {
        data_card_from_value(&self.to_value())
    }
}

impl ModelCard {
    pub fn to_value(&self) -> Value {
        let mut hparams = Map::new();
        for spec in self.arch_hparams.iter() {
            let domain = match &spec.domain {
                ParamDomain::Linear { min, max } | ParamDomain::Log { min, max } => Value::from(vec![*min, *max]),
                ParamDomain::Integer { min, max } => Value::from(vec![*min, *max]),
                ParamDomain::Categorical(options) => Value::from(options.clone()),
            };
            let mut s = Map::new();
            s.insert("kind".into(), spec.kind().as_str().into());
            s.insert("domain".into(), domain);
            s.insert("default".into(), spec.default.to_json());
            s.insert("flexibility".into(), spec.flexibility.as_str().into());
            hparams.insert(spec.name.clone(), Value::Object(s));
        }
        let mut obj = Map::new();
        obj.insert("name".into(), self.name.clone().into());
        obj.insert("structure".into(), self.structure.clone().into());
        obj.insert("description".into(), self.description.clone().into());
        obj.insert("arch_hparams".into(), Value::Object(hparams));
        Value::Object(obj)
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("card serializes")
    }
}

impl From<DataCard> for Value {
    fn from(card: DataCard) -> Value {
        card.to_value()
    }
}

impl TryFrom<Value> for DataCard {
    type Error = CardError;
    fn try_from(v: Value) -> Result<Self, Self::Error> {
        data_card_from_value(&v)
    }
}

impl From<ModelCard> for Value {
    fn from(card: ModelCard) -> Value {
        card.to_value()
    }
}

impl TryFrom<Value> for ModelCard {
    type Error = CardError;
    fn try_from(v: Value) -> Result<Self, Self::Error> {
        model_card_from_value(&v)
    }
}
