//! Hyperparameter transfer from similar, previously tuned datasets, and
//! model assignment by card similarity.
//!
//! Neighbors are the top-`k` registry records (for the target model) whose
//! card similarity reaches `tau`; their weights are similarities normalized
//! to sum to one. Blending is kind-aware: log-scale parameters average in log
//! space, linear ones arithmetically, integers round half to even, and
//! categoricals take the heaviest category.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::{DataCard, HyperParamConfig, HyperParamSpace, ModelCard, ParamDomain, ParamValue};
use crate::encoder::{card_text, similarity, Embedder, EncoderError};
use crate::registry::{Registry, TuningRecord};

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("no registry dataset reaches the similarity threshold")]
    NoNeighbors,
    #[error("neighbor `{dataset}` lacks a usable value for `{param}`")]
    IncompatibleConfigs { dataset: String, param: String },
    #[error("invalid transfer parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferParams {
    pub k: usize,
    pub tau: f64,
}

impl Default for TransferParams {
    fn default() -> Self {
        TransferParams {
            k: DEFAULT_K,
            tau: DEFAULT_TAU,
        }
    }
}

impl TransferParams {
    pub fn validate(&self) -> Result<(), TransferError> {
        if self.k == 0 {
            return Err(TransferError::InvalidParameters("k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(TransferError::InvalidParameters("tau must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub record: TuningRecord,
    pub similarity: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub entries: Vec<Neighbor>,
    pub k: usize,
    pub tau: f64,
}

impl NeighborSet {
    /// Filters scored candidates by `tau`, keeps the `k` most similar (ties
    /// by dataset name) and normalizes their weights. Zero similarities are
    /// dropped even when `tau == 0`, since they carry no weight.
    pub fn from_scored(scored: Vec<(TuningRecord, f64)>, params: TransferParams) -> Result<NeighborSet, TransferError> {
        params.validate()?;
        let mut kept: Vec<(TuningRecord, f64)> = scored
            .into_iter()
            .filter(|(_, s)| *s >= params.tau && *s > 0.0)
            .collect();
        kept.sort_by(|(ra, sa), (rb, sb)| {
            sb.partial_cmp(sa)
                .unwrap_or(Ordering::Equal)
                .then_with(|| ra.data_card.name.cmp(&rb.data_card.name))
        });
        kept.truncate(params.k);
        if kept.is_empty() {
            return Err(TransferError::NoNeighbors);
        }
        let total: f64 = kept.iter().map(|(_, s)| s).sum();
        let entries = kept
            .into_iter()
            .map(|(record, s)| Neighbor {
                record,
                similarity: s,
                weight: s / total,
            })
            .collect();
        Ok(NeighborSet {
            entries,
            k: params.k,
            tau: params.tau,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn summary(&self) -> Vec<NeighborWeight> {
        self.entries
            .iter()
            .map(|n| NeighborWeight {
                dataset: n.record.data_card.name.clone(),
                similarity: n.similarity,
                weight: n.weight,
            })
            .collect()
    }
}

pub fn select_neighbors(
    card: &DataCard,
    registry: &Registry,
    model_card_name: &str,
    embedder: &dyn Embedder,
    params: TransferParams,
) -> Result<NeighborSet, TransferError> {
    params.validate()?;
    let target = embedder.embed(&card_text(card))?;
    let mut scored = Vec::new();
    for record in registry.query_records(model_card_name) {
        let e = embedder.embed(&card_text(&record.data_card))?;
        scored.push((record.clone(), similarity(&target, &e)?));
    }
    NeighborSet::from_scored(scored, params)
}

/// Blends the neighbors' configurations parameter by parameter.
pub fn blend_configs(neighbors: &NeighborSet, space: &HyperParamSpace) -> Result<HyperParamConfig, TransferError> {
    if neighbors.is_empty() {
        return Err(TransferError::NoNeighbors);
    }
    let mut out = HyperParamConfig::new();
    for spec in space.iter() {
        let mut values = Vec::with_capacity(neighbors.len());
        for n in &neighbors.entries {
            let v = n
                .record
                .config
                .get(&spec.name)
                .filter(|v| spec.domain.contains(v))
                .ok_or_else(|| TransferError::IncompatibleConfigs {
                    dataset: n.record.data_card.name.clone(),
                    param: spec.name.clone(),
                })?;
            values.push((v, n.weight));
        }
        out.insert(spec.name.clone(), blend_param(&spec.domain, &values));
    }
    Ok(out)
}

fn blend_param(domain: &ParamDomain, values: &[(&ParamValue, f64)]) -> ParamValue {
    // identical inputs (including a singleton) return the value untouched
    if values.iter().all(|(v, _)| *v == values[0].0) {
        return values[0].0.clone();
    }
    match domain {
        ParamDomain::Log { min, max } => {
            let xs: Vec<(f64, f64)> = numeric(values);
            let log_mean: f64 = xs.iter().map(|(x, w)| w * x.ln()).sum();
            let (lo, hi) = bounds(&xs);
            ParamValue::Float(log_mean.exp().clamp(lo, hi).clamp(*min, *max))
        }
        ParamDomain::Linear { min, max } => {
            let xs = numeric(values);
            let mean: f64 = xs.iter().map(|(x, w)| w * x).sum();
            let (lo, hi) = bounds(&xs);
            ParamValue::Float(mean.clamp(lo, hi).clamp(*min, *max))
        }
        ParamDomain::Integer { min, max } => {
            let xs = numeric(values);
            let mean: f64 = xs.iter().map(|(x, w)| w * x).sum();
            let (lo, hi) = bounds(&xs);
            let rounded = mean.clamp(lo, hi).round_ties_even() as i64;
            ParamValue::Int(rounded.clamp(*min, *max))
        }
        ParamDomain::Categorical(_) => {
            let mut mass: BTreeMap<&str, f64> = BTreeMap::new();
            for (v, w) in values {
                if let ParamValue::Text(s) = v {
                    *mass.entry(s.as_str()).or_default() += w;
                }
            }
            // BTreeMap iterates in lexicographic order, so the first maximum wins ties
            let mut best: Option<(&str, f64)> = None;
            for (k, m) in mass {
                if best.is_none_or(|(_, bm)| m > bm) {
                    best = Some((k, m));
                }
            }
            ParamValue::Text(best.map(|(k, _)| k.to_string()).unwrap_or_default())
        }
    }
}

fn numeric(values: &[(&ParamValue, f64)]) -> Vec<(f64, f64)> {
    values.iter().filter_map(|(v, w)| v.as_f64().map(|x| (x, *w))).collect()
}

fn bounds(xs: &[(f64, f64)]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
        (lo.min(*x), hi.max(*x))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationSource {
    Transfer,
    Backend,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborWeight {
    pub dataset: String,
    pub similarity: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub config: HyperParamConfig,
    pub source: RecommendationSource,
    pub neighbor_summary: Vec<NeighborWeight>,
    pub rationale: String,
}

impl Recommendation {
    pub fn defaults(model: &ModelCard, rationale: impl Into<String>) -> Self {
        Recommendation {
            config: model.space().defaults(),
            source: RecommendationSource::Default,
            neighbor_summary: Vec::new(),
            rationale: rationale.into(),
        }
    }
}

/// Transfer recommendation for `card`, falling back to the model card's
/// defaults when no neighbor qualifies or the neighbors cannot be blended.
pub fn recommend(
    card: &DataCard,
    model: &ModelCard,
    registry: &Registry,
    embedder: &dyn Embedder,
    params: TransferParams,
) -> Result<Recommendation, TransferError> {
    let neighbors = match select_neighbors(card, registry, &model.name, embedder, params) {
        Ok(n) => n,
        Err(TransferError::NoNeighbors) => {
            return Ok(Recommendation::defaults(
                model,
                format!(
                    "no registry dataset for `{}` reached similarity {}; using model card defaults",
                    model.name, params.tau
                ),
            ))
        }
        Err(e) => return Err(e),
    };
    match blend_configs(&neighbors, model.space()) {
        Ok(config) => {
            let parts: Vec<String> = neighbors
                .entries
                .iter()
                .map(|n| {
                    format!(
                        "{} (similarity {:.3}, weight {:.3})",
                        n.record.data_card.name, n.similarity, n.weight
                    )
                })
                .collect();
            Ok(Recommendation {
                config,
                source: RecommendationSource::Transfer,
                neighbor_summary: neighbors.summary(),
                rationale: format!("blended from {}", parts.join(", ")),
            })
        }
        Err(TransferError::IncompatibleConfigs { dataset, param }) => Ok(Recommendation::defaults(
            model,
            format!("neighbor `{dataset}` has no usable `{param}`; using model card defaults"),
        )),
        Err(e) => Err(e),
    }
}

/// Picks the model card whose description and structure are most similar
/// to the data card; ties go to the lexicographically smaller name.
pub fn assign_model<'a>(
    card: &DataCard,
    model_cards: &'a [ModelCard],
    embedder: &dyn Embedder,
) -> Result<Option<&'a ModelCard>, TransferError> {
    let target = embedder.embed(&card_text(card))?;
    let mut best: Option<(&ModelCard, f64)> = None;
    for m in model_cards {
        let e = embedder.embed(&format!("{} {}", m.description, m.structure))?;
        let s = similarity(&target, &e)?;
        best = match best {
            Some((b, bs)) if bs > s || (bs == s && b.name <= m.name) => Some((b, bs)),
            _ => Some((m, s)),
        };
    }
    Ok(best.map(|(m, _)| m))
}
