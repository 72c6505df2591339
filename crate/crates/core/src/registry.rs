//! Store of best-known configurations per (dataset, model) pair.
//!
//! On disk a registry is a directory holding `registry.json` and a
//! `registry.sha256` file with the hex digest of the JSON bytes. Saves write
//! both files to temporaries and rename them into place.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cards::{DataCard, HyperParamConfig, ModelCard};

pub const REGISTRY_FILE: &str = "registry.json";
pub const CHECKSUM_FILE: &str = "registry.sha256";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("new {metric} = {new} does not improve on stored {stored} for ({dataset}, {model})")]
    RegressionRejected {
        dataset: String,
        model: String,
        metric: String,
        stored: f64,
        new: f64,
    },
    #[error("unknown model card `{0}`")]
    UnknownModelCard(String),
    #[error("registry i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("corrupt registry: {0}")]
    CorruptRegistry(String),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::InvalidRecord(_) => "invalid_record",
            RegistryError::RegressionRejected { .. } => "regression_rejected",
            RegistryError::UnknownModelCard(_) => "unknown_model_card",
            RegistryError::IoFailure(_) => "io_failure",
            RegistryError::CorruptRegistry(_) => "corrupt_registry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GridSearch,
    Manual,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningRecord {
    pub data_card: DataCard,
    pub model_card_name: String,
    pub config: HyperParamConfig,
    pub best_metric: MetricValue,
    pub provenance: Provenance,
    /// UTC seconds.
    pub created_at: i64,
}

impl TuningRecord {
    fn key(&self) -> (String, String) {
        (self.data_card.name.to_lowercase(), self.model_card_name.to_lowercase())
    }
}

/// Metrics whose name suggests smaller is better. Everything else is treated
/// as higher-is-better.
pub fn lower_is_better(metric: &str) -> bool {
    const MARKERS: &[&str] = &["loss", "error", "latency", "perplexity", "rmse", "mse", "mae", "time"];
    let m = metric.to_lowercase();
    MARKERS.iter().any(|k| m.contains(k))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    records: Vec<TuningRecord>,
    model_cards: BTreeMap<String, ModelCard>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[TuningRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn model_cards(&self) -> impl Iterator<Item = &ModelCard> {
        self.model_cards.values()
    }

    pub fn model_card(&self, name: &str) -> Option<&ModelCard> {
        self.model_cards.get(name)
    }

    /// Registers (or replaces) a model card by name.
    pub fn register_model_card(&mut self, card: ModelCard) {
        self.model_cards.insert(card.name.clone(), card);
    }

    /// Inserts `record`, replacing an existing record for the same
    /// (dataset, model) pair only when the metric does not regress.
    pub fn add_record(&mut self, record: TuningRecord) -> Result<(), RegistryError> {
        let model = self
            .model_cards
            .get(&record.model_card_name)
            .ok_or_else(|| RegistryError::UnknownModelCard(record.model_card_name.clone()))?;
        check_record(&record, model)?;

        let key = record.key();
        let dataset_lc = &key.0;
        if let Some(other) = self.records.iter().find(|r| {
            r.data_card.name.to_lowercase() == *dataset_lc && r.key() != key && r.data_card != record.data_card
        }) {
            return Err(RegistryError::InvalidRecord(format!(
                "dataset name `{}` is already registered with a different data card",
                other.data_card.name
            )));
        }

        match self.records.iter().position(|r| r.key() == key) {
            Some(i) => {
                let stored = &self.records[i].best_metric;
                if stored.name == record.best_metric.name {
                    let regress = if lower_is_better(&stored.name) {
                        record.best_metric.value > stored.value
                    } else {
                        record.best_metric.value < stored.value
                    };
                    if regress {
                        return Err(RegistryError::RegressionRejected {
                            dataset: record.data_card.name.clone(),
                            model: record.model_card_name.clone(),
                            metric: stored.name.clone(),
                            stored: stored.value,
                            new: record.best_metric.value,
                        });
                    }
                }
                self.records[i] = record;
            }
            None => self.records.push(record),
        }
        Ok(())
    }

    /// All records for `model_card_name`, ordered by dataset name.
    pub fn query_records(&self, model_card_name: &str) -> Vec<&TuningRecord> {
        let mut out: Vec<&TuningRecord> = self
            .records
            .iter()
            .filter(|r| r.model_card_name == model_card_name)
            .collect();
        out.sort_by(|a, b| a.data_card.name.cmp(&b.data_card.name));
        out
    }

    fn check_invariants(&self) -> Result<(), RegistryError> {
        let mut keys = std::collections::BTreeSet::new();
        for r in &self.records {
            let model = self
                .model_cards
                .get(&r.model_card_name)
                .ok_or_else(|| RegistryError::UnknownModelCard(r.model_card_name.clone()))?;
            check_record(r, model)?;
            if !keys.insert(r.key()) {
                return Err(RegistryError::InvalidRecord(format!(
                    "duplicate record for ({}, {})",
                    r.data_card.name, r.model_card_name
                )));
            }
        }
        for (name, card) in &self.model_cards {
            if *name != card.name {
                return Err(RegistryError::InvalidRecord(format!(
                    "model card stored under `{name}` is named `{}`",
                    card.name
                )));
            }
        }
        Ok(())
    }
}

fn check_record(record: &TuningRecord, model: &ModelCard) -> Result<(), RegistryError> {
    let report = model.space().validate(&record.config);
    if !report.is_ok() {
        return Err(RegistryError::InvalidRecord(format!(
            "config does not validate against `{}`: {report}",
            model.name
        )));
    }
    let missing = model.space().missing_in(&record.config);
    if !missing.is_empty() {
        return Err(RegistryError::InvalidRecord(format!(
            "config lacks {}",
            missing.join(", ")
        )));
    }
    if !record
        .data_card
        .eval_metrics
        .iter()
        .any(|m| m == &record.best_metric.name)
    {
        return Err(RegistryError::InvalidRecord(format!(
            "metric `{}` is not among the data card's eval metrics",
            record.best_metric.name
        )));
    }
    if !record.best_metric.value.is_finite() {
        return Err(RegistryError::InvalidRecord("metric value is not finite".into()));
    }
    Ok(())
}

pub fn checksum_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads a registry directory. A missing or empty directory is an empty
/// registry.
pub fn load_registry(dir: &Path) -> Result<Registry, RegistryError> {
    let json_path = dir.join(REGISTRY_FILE);
    let sum_path = dir.join(CHECKSUM_FILE);
    let bytes = match fs::read(&json_path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            if sum_path.exists() {
                return Err(RegistryError::CorruptRegistry(format!(
                    "{CHECKSUM_FILE} present without {REGISTRY_FILE}"
                )));
            }
            return Ok(Registry::new());
        }
        Err(e) => return Err(e.into()),
    };
    let expected = match fs::read_to_string(&sum_path) {
        Ok(s) => s.trim().to_string(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(RegistryError::CorruptRegistry(format!("missing {CHECKSUM_FILE}")))
        }
        Err(e) => return Err(e.into()),
    };
    if checksum_hex(&bytes) != expected {
        return Err(RegistryError::CorruptRegistry("checksum mismatch".into()));
    }
    let registry: Registry =
        serde_json::from_slice(&bytes).map_err(|e| RegistryError::CorruptRegistry(e.to_string()))?;
    registry.check_invariants().map_err(|e| match e {
        RegistryError::CorruptRegistry(m) => RegistryError::CorruptRegistry(m),
        other => RegistryError::CorruptRegistry(other.to_string()),
    })?;
    Ok(registry)
}

pub fn save_registry(registry: &Registry, dir: &Path) -> Result<(), RegistryError> {
    fs::create_dir_all(dir)?;
    let mut bytes = serde_json::to_vec_pretty(registry).map_err(|e| RegistryError::InvalidRecord(e.to_string()))?;
    bytes.push(b'\n');
    let sum = format!("{}\n", checksum_hex(&bytes));

    let json_tmp = tmp_path(dir, REGISTRY_FILE);
    let sum_tmp = tmp_path(dir, CHECKSUM_FILE);
    write_synced(&json_tmp, &bytes)?;
    write_synced(&sum_tmp, sum.as_bytes())?;
    fs::rename(&json_tmp, dir.join(REGISTRY_FILE))?;
    fs::rename(&sum_tmp, dir.join(CHECKSUM_FILE))?;
    Ok(())
}

fn tmp_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!(".{name}.tmp-{}", std::process::id()))
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    use std::io::Write;
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

/// A registry bound to a directory: every mutation is load, apply, save.
#[derive(Debug, Clone)]
pub struct RegistryStore {
    dir: PathBuf,
}

impl RegistryStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RegistryStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn load(&self) -> Result<Registry, RegistryError> {
        load_registry(&self.dir)
    }

    pub fn add_record(&self, record: TuningRecord) -> Result<Registry, RegistryError> {
        let mut registry = self.load()?;
        registry.add_record(record)?;
        save_registry(&registry, &self.dir)?;
        Ok(registry)
    }

    pub fn register_model_card(&self, card: ModelCard) -> Result<Registry, RegistryError> {
        let mut registry = self.load()?;
        registry.register_model_card(card);
        save_registry(&registry, &self.dir)?;
        Ok(registry)
    }
}
