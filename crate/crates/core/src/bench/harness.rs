use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::data::{generate_task, FamilyError, SyntheticDataset, TaskFamily};
use super::trainer::{train_tiny, TrainError};
use crate::cards::{parse_model_card, DataCard, HyperParamConfig, ModelCard, ParamDomain, ParamValue};
use crate::encoder::HashEmbedder;
use crate::registry::{MetricValue, Provenance, Registry, RegistryError, TuningRecord};
use crate::transfer::{recommend, RecommendationSource, TransferError, TransferParams};
use crate::tuner::{grid_search_oracle, GridAxis, GridError, GridSpec};

pub const BENCH_MODEL_NAME: &str = "softmax-regression";
pub const SIGMA_RANGE: (f64, f64) = (0.5, 4.0);
pub const CLASS_RANGE: (usize, usize) = (5, 10);

const BENCH_MODEL_CARD: &str = r#"{
  "name": "softmax-regression",
  "structure": "linear layer with softmax output",
  "description": "multinomial logistic regression trained by mini-batch gradient descent",
  "arch_hparams": {
    "learning_rate": {"kind": "continuous_log", "domain": [1e-4, 1e3], "default": 1e-1, "flexibility": "tunable"},
    "weight_decay": {"kind": "continuous_log", "domain": [1e-6, 1e-1], "default": 1e-3, "flexibility": "tunable"},
    "batch_size": {"kind": "integer", "domain": [8, 256], "default": 32, "flexibility": "tunable"},
    "epochs": {"kind": "integer", "domain": [1, 20], "default": 5, "flexibility": "tunable"}
  }
}"#;

pub fn bench_model_card() -> ModelCard {
    parse_model_card(BENCH_MODEL_CARD.as_bytes()).expect("built-in model card is valid")
}

/// Half-decade learning-rate grid over the bench model's domain.
pub fn lr_grid() -> GridSpec {
    GridSpec::new().axis(
        "learning_rate",
        GridAxis::LogUniform {
            min: 1e-4,
            max: 1e3,
            points: 15,
        },
    )
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least 2 known families, got {0}")]
    TooFewKnown(usize),
    #[error("need at least one trial seed")]
    NoTrials,
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Final validation accuracy, or `None` when training diverged.
pub fn final_accuracy(ds: &SyntheticDataset, config: &HyperParamConfig, seed: u64) -> Result<Option<f64>, TrainError> {
    match train_tiny(ds, config, seed) {
        Ok(log) => Ok(log.final_metric()),
        Err(TrainError::DivergedTraining { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Grid-searches the learning rate of `family` and returns its registry
/// record.
pub fn tune_family(family: &TaskFamily, model: &ModelCard) -> Result<(TuningRecord, DataCard), BenchError> {
    let (ds, card) = generate_task(family)?;
    let mut failure = None;
    let (config, best) = grid_search_oracle(
        model.space(),
        |c| match final_accuracy(&ds, c, family.seed) {
            Ok(Some(acc)) => acc,
            Ok(None) => f64::NEG_INFINITY,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        &lr_grid(),
    )?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let record = TuningRecord {
        data_card: card.clone(),
        model_card_name: model.name.clone(),
        config,
        best_metric: MetricValue {
            name: "accuracy".into(),
            value: best.max(0.0),
        },
        provenance: Provenance::GridSearch,
        created_at: 0,
    };
    Ok((record, card))
}

pub fn random_family(family_id: &str, rng: &mut ChaCha8Rng) -> Result<TaskFamily, FamilyError> {
    let (lo, hi) = SIGMA_RANGE;
    let sigma = (rng.gen_range(lo.ln()..=hi.ln())).exp();
    let k = rng.gen_range(CLASS_RANGE.0..=CLASS_RANGE.1);
    let seed = rng.gen();
    TaskFamily::random_names(family_id, sigma, k, seed)
}

/// Domain-uniform draw; log-uniform on log-scale parameters.
pub fn random_config(model: &ModelCard, rng: &mut ChaCha8Rng) -> HyperParamConfig {
    let mut cfg = HyperParamConfig::new();
    for spec in model.space().iter() {
        let v = match &spec.domain {
            ParamDomain::Log { min, max } => ParamValue::Float(rng.gen_range(min.ln()..=max.ln()).exp()),
            ParamDomain::Linear { min, max } => ParamValue::Float(rng.gen_range(*min..=*max)),
            ParamDomain::Integer { min, max } => ParamValue::Int(rng.gen_range(*min..=*max)),
            ParamDomain::Categorical(options) => ParamValue::Text(options[rng.gen_range(0..options.len())].clone()),
        };
        cfg.insert(spec.name.clone(), v);
    }
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub config: HyperParamConfig,
    pub accuracy: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub held_out: TaskFamily,
    pub source: RecommendationSource,
    pub neighbors: Vec<String>,
    pub recommended: ArmResult,
    pub random: ArmResult,
    pub default: ArmResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_known: usize,
    pub k: usize,
    pub tau: f64,
    pub mean_recommended: f64,
    pub mean_random: f64,
    pub mean_default: f64,
    /// Fraction of trials with recommended >= random.
    pub win_rate: f64,
    /// Fraction of trials with recommended >= default.
    pub default_win_rate: f64,
    pub diverged_runs: usize,
    pub trials: Vec<TrialResult>,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>20} {:>7} {:>6} {:>12} {:>12} {:>12}",
            "seed", "sigma", "k", "recommended", "random", "default"
        );
        let arm = |a: &ArmResult| {
            if a.diverged {
                format!("{:.4}*", a.accuracy)
            } else {
                format!("{:.4}", a.accuracy)
            }
        };
        for t in &self.trials {
            let _ = writeln!(
                s,
                "{:>20} {:>7.3} {:>6} {:>12} {:>12} {:>12}",
                t.seed,
                t.held_out.sigma,
                t.held_out.n_classes,
                arm(&t.recommended),
                arm(&t.random),
                arm(&t.default)
            );
        }
        let _ = writeln!(
            s,
            "{:>20} {:>7} {:>6} {:>12.4} {:>12.4} {:>12.4}",
            "mean", "", "", self.mean_recommended, self.mean_random, self.mean_default
        );
        let n = self.trials.len();
        let _ = writeln!(
            s,
            "recommended >= random in {}/{n} trials; recommended >= default in {}/{n} trials; {} diverged runs (* scored at chance)",
            (self.win_rate * n as f64).round(),
            (self.default_win_rate * n as f64).round(),
            self.diverged_runs
        );
        s
    }
}

fn run_arm(ds: &SyntheticDataset, config: HyperParamConfig, seed: u64) -> Result<ArmResult, BenchError> {
    let chance = 1.0 / ds.n_classes as f64;
    let acc = final_accuracy(ds, &config, seed)?;
    Ok(ArmResult {
        config,
        accuracy: acc.unwrap_or(chance),
        diverged: acc.is_none(),
    })
}

/// Builds a registry of `known` tuned families for the bench model.
pub fn build_registry(known: &[TaskFamily]) -> Result<Registry, BenchError> {
    let model = bench_model_card();
    let mut registry = Registry::new();
    registry.register_model_card(model.clone());
    let records: Vec<TuningRecord> = known
        .par_iter()
        .map(|f| tune_family(f, &model).map(|(r, _)| r))
        .collect::<Result<_, _>>()?;
    for r in records {
        registry.add_record(r)?;
    }
    Ok(registry)
}

/// Runs the three arms on `held_out` against a prepared registry.
pub fn run_trial(
    seed: u64,
    held_out: TaskFamily,
    registry: &Registry,
    params: TransferParams,
    rng: &mut ChaCha8Rng,
) -> Result<TrialResult, BenchError> {
    let model = bench_model_card();
    let (ds, card) = generate_task(&held_out)?;
    let rec = recommend(&card, &model, registry, &HashEmbedder, params)?;
    let train_seed = held_out.seed;
    let random_cfg = random_config(&model, rng);
    Ok(TrialResult {
        seed,
        source: rec.source,
        neighbors: rec.neighbor_summary.iter().map(|n| n.dataset.clone()).collect(),
        recommended: run_arm(&ds, rec.config, train_seed)?,
        random: run_arm(&ds, random_cfg, train_seed)?,
        default: run_arm(&ds, model.space().defaults(), train_seed)?,
        held_out,
    })
}

fn one_trial(seed: u64, n_known: usize, params: TransferParams) -> Result<TrialResult, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let known = (0..n_known)
        .map(|i| random_family(&format!("family-{seed}-{i}"), &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let held_out = random_family(&format!("held-out-{seed}"), &mut rng)?;
    let registry = build_registry(&known)?;
    run_trial(seed, held_out, &registry, params, &mut rng)
}

/// Desk-scale unseen-dataset experiment: per seed, tune `n_known` random
/// families by grid search, then compare the transferred configuration for
/// a fresh family against a random draw and the model card defaults.
/// Diverged runs score chance accuracy.
pub fn run_unseen_benchmark(n_known: usize, seeds: &[u64], params: TransferParams) -> Result<BenchReport, BenchError> {
    if n_known < 2 {
        return Err(BenchError::TooFewKnown(n_known));
    }
    if seeds.is_empty() {
        return Err(BenchError::NoTrials);
    }
    params.validate()?;
    let trials: Vec<TrialResult> = seeds
        .par_iter()
        .map(|&s| one_trial(s, n_known, params))
        .collect::<Result<_, _>>()?;
    let n = trials.len() as f64;
    let mean = |f: fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / n;
    let frac = |f: fn(&TrialResult) -> bool| trials.iter().filter(|t| f(t)).count() as f64 / n;
    Ok(BenchReport {
        n_known,
        k: params.k,
        tau: params.tau,
        mean_recommended: mean(|t| t.recommended.accuracy),
        mean_random: mean(|t| t.random.accuracy),
        mean_default: mean(|t| t.default.accuracy),
        win_rate: frac(|t| t.recommended.accuracy >= t.random.accuracy),
        default_win_rate: frac(|t| t.recommended.accuracy >= t.default.accuracy),
        diverged_runs: trials
            .iter()
            .map(|t| {
                usize::from(t.recommended.diverged) + usize::from(t.random.diverged) + usize::from(t.default.diverged)
            })
            .sum(),
        trials,
    })
}

/// Seeds `0..n` spread out by a fixed odd multiplier.
pub fn default_seeds(n: usize) -> Vec<u64> {
    (0..n as u64)
        .map(|i| i.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1))
        .collect()
}
