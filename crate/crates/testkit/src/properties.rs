//! Property checks shared by the per-module suites and the acceptance run.
//! Each runs a proptest runner for `cases` cases and returns the shrunk
//! counterexample on failure.

use cardtune::bench::{bench_model_card, random_family, tune_family};
use cardtune::cards::{
    parse_data_card, parse_model_card, DataCard, HyperParamConfig, HyperParamSpace, InputType, LabelSpace, ModelCard,
    ParamValue,
};
use cardtune::encoder::{card_similarity, Embedder, Embedding, EncoderError, HashEmbedder};
use cardtune::oracle::{parse_training_log, MockBackend, TrainingLog};
use cardtune::registry::{load_registry, save_registry, MetricValue, Provenance, Registry, TuningRecord};
use cardtune::transfer::{assign_model, blend_configs, NeighborSet, Recommendation, TransferParams};
use cardtune::tuner::tune;
use proptest::prelude::*;
use proptest::sample::Index;
use proptest::test_runner::{Config, TestRunner};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fixtures::{data_card, model_card};
use crate::strategies;

pub type Outcome = Result<(), String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Outcome
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

pub fn data_card_round_trip(cases: u32) -> Outcome {
    check(cases, strategies::data_card(), |card| {
        prop_assert_eq!(parse_data_card(card.to_document().as_bytes()).unwrap(), card);
        Ok(())
    })
}

pub fn model_card_round_trip(cases: u32) -> Outcome {
    check(cases, strategies::model_card(), |card| {
        prop_assert_eq!(parse_model_card(card.to_document().as_bytes()).unwrap(), card);
        Ok(())
    })
}

pub fn training_log_round_trip(cases: u32) -> Outcome {
    check(cases, strategies::training_log(), |log| {
        prop_assert_eq!(&parse_training_log(&log.serialize()).unwrap(), &log);
        let json = serde_json::to_string(&log).unwrap();
        prop_assert_eq!(serde_json::from_str::<TrainingLog>(&json).unwrap(), log);
        Ok(())
    })
}

/// JSON document and checksummed directory, both ways.
pub fn registry_round_trip(cases: u32) -> Outcome {
    check(cases, strategies::registry(), |reg| {
        let json = serde_json::to_vec(&reg).unwrap();
        prop_assert_eq!(&serde_json::from_slice::<Registry>(&json).unwrap(), &reg);
        let dir = tempfile::tempdir().unwrap();
        save_registry(&reg, dir.path()).unwrap();
        prop_assert_eq!(load_registry(dir.path()).unwrap(), reg);
        Ok(())
    })
}

fn record(i: usize, config: HyperParamConfig) -> TuningRecord {
    TuningRecord {
        data_card: DataCard {
            name: format!("d{i}"),
            input_type: InputType::Image,
            label_space: LabelSpace::Classes(vec![format!("c{i}")]),
            scale: None,
            task_description: String::new(),
            eval_metrics: vec!["accuracy".into()],
        },
        model_card_name: "m".into(),
        config,
        best_metric: MetricValue {
            name: "accuracy".into(),
            value: 0.5,
        },
        provenance: Provenance::Manual,
        created_at: 0,
    }
}

fn scored(rows: &[(HyperParamConfig, f64)]) -> Vec<(TuningRecord, f64)> {
    rows.iter()
        .enumerate()
        .map(|(i, (c, s))| (record(i, c.clone()), *s))
        .collect()
}

fn plain(sims: &[f64]) -> Vec<(TuningRecord, f64)> {
    scored(&sims.iter().map(|s| (HyperParamConfig::new(), *s)).collect::<Vec<_>>())
}

fn all_of(n: usize) -> TransferParams {
    TransferParams { k: n, tau: 0.0 }
}

/// A space, 1..5 neighbor configs inside it, and a similarity for each.
fn neighborhood() -> impl Strategy<Value = (HyperParamSpace, Vec<(HyperParamConfig, f64)>)> {
    strategies::space().prop_flat_map(|space| {
        let row = (strategies::config_in(&space), 0.01f64..=1.0);
        (Just(space), prop::collection::vec(row, 1..5))
    })
}

pub fn weight_normalization(cases: u32) -> Outcome {
    let s = (prop::collection::vec(0.0f64..=1.0, 1..12), 1usize..6, 0.0f64..0.5);
    check(cases, s, |(sims, k, tau)| {
        if let Ok(set) = NeighborSet::from_scored(plain(&sims), TransferParams { k, tau }) {
            let total: f64 = set.entries.iter().map(|n| n.weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12, "sum of weights {}", total);
            prop_assert!(set.len() <= k);
            prop_assert!(set.entries.iter().all(|n| n.similarity >= tau && n.weight > 0.0));
        }
        Ok(())
    })
}

pub fn blend_bounds(cases: u32) -> Outcome {
    check(cases, neighborhood(), |(space, rows)| {
        let set = NeighborSet::from_scored(scored(&rows), all_of(rows.len())).unwrap();
        let blended = blend_configs(&set, &space).unwrap();
        for spec in space.iter() {
            let vals: Vec<f64> = rows.iter().filter_map(|(c, _)| c.get_f64(&spec.name)).collect();
            if let (Some(v), false) = (blended.get_f64(&spec.name), vals.is_empty()) {
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= v && v <= hi, "{}: {} not in [{}, {}]", spec.name, v, lo, hi);
            }
        }
        prop_assert!(space.validate(&blended).is_ok());
        Ok(())
    })
}

pub fn singleton_identity(cases: u32) -> Outcome {
    let s = strategies::space().prop_flat_map(|space| {
        let c = strategies::config_in(&space);
        (Just(space), c, 0.01f64..=1.0)
    });
    check(cases, s, |(space, config, sim)| {
        let set = NeighborSet::from_scored(vec![(record(0, config.clone()), sim)], all_of(1)).unwrap();
        prop_assert_eq!(blend_configs(&set, &space).unwrap(), config);
        Ok(())
    })
}

pub fn similarity_monotonicity(cases: u32) -> Outcome {
    let s = (neighborhood(), any::<Index>(), 0.0f64..5.0);
    check(cases, s, |((space, rows), pick, bump)| {
        let j = pick.index(rows.len());
        let blend = |rows: &[(HyperParamConfig, f64)]| {
            blend_configs(
                &NeighborSet::from_scored(scored(rows), all_of(rows.len())).unwrap(),
                &space,
            )
            .unwrap()
        };
        let before = blend(&rows);
        let mut raised = rows.clone();
        raised[j].1 += bump;
        let after = blend(&raised);
        for spec in space.iter() {
            let (Some(target), Some(b), Some(a)) = (
                rows[j].0.get_f64(&spec.name),
                before.get_f64(&spec.name),
                after.get_f64(&spec.name),
            ) else {
                continue;
            };
            let tol = 1e-9 * target.abs().max(1.0);
            prop_assert!(
                (a - target).abs() <= (b - target).abs() + tol,
                "{}: {} -> {} moved away from {}",
                spec.name,
                b,
                a,
                target
            );
        }
        Ok(())
    })
}

/// Hash embedder with every vector multiplied by a positive constant.
struct Scaled(f64);

impl Embedder for Scaled {
    fn id(&self) -> &str {
        "scaled-hash"
    }

    fn embed(&self, text: &str) -> Result<Embedding, EncoderError> {
        let e = HashEmbedder.embed(text)?;
        Ok(Embedding::from_raw(e.values().iter().map(|v| v * self.0).collect()))
    }
}

/// Positive scaling of all similarities keeps neighbor weights, and of all
/// embeddings keeps the assigned model.
pub fn scaling_invariance(cases: u32) -> Outcome {
    let models: Vec<ModelCard> = ["detector", "dpr", "xgboost", "vit"].map(model_card).into();
    let s = (
        prop::collection::vec(0.01f64..=1.0, 1..8),
        1usize..6,
        0.01f64..100.0,
        strategies::data_card(),
    );
    check(cases, s, |(sims, k, c, card)| {
        let params = TransferParams { k, tau: 0.0 };
        let scaled: Vec<f64> = sims.iter().map(|s| s * c).collect();
        let a = NeighborSet::from_scored(plain(&sims), params).unwrap();
        let b = NeighborSet::from_scored(plain(&scaled), params).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert_eq!(&x.record.data_card.name, &y.record.data_card.name);
            prop_assert!((x.weight - y.weight).abs() <= 1e-12);
        }
        let plain_pick = assign_model(&card, &models, &HashEmbedder)
            .unwrap()
            .map(|m| m.name.clone());
        let scaled_pick = assign_model(&card, &models, &Scaled(c))
            .unwrap()
            .map(|m| m.name.clone());
        prop_assert_eq!(plain_pick, scaled_pick);
        Ok(())
    })
}

fn seed_at(model: &ModelCard, lr: f64) -> Recommendation {
    let mut rec = Recommendation::defaults(model, "seed");
    rec.config.insert("learning_rate", ParamValue::Float(lr));
    rec
}

/// Budget law, monotone running best and never worse than the seed, on the
/// mock surface.
pub fn tuner_laws(cases: u32) -> Outcome {
    let model = model_card("vit");
    let s = ("[a-z]{1,8}", -6.0f64..=-1.0, 1usize..50);
    check(cases, s, |(name, log_lr, budget)| {
        let data = DataCard {
            name,
            ..data_card("new")
        };
        let result = tune(
            &seed_at(&model, 10f64.powf(log_lr)),
            &data,
            &model,
            &MockBackend,
            &[],
            budget,
        )
        .unwrap();
        prop_assert!(result.queries_used <= budget);
        prop_assert!(result.trajectory.len() <= budget);
        let mut running = f64::NEG_INFINITY;
        for entry in &result.trajectory {
            let next = running.max(entry.final_metric);
            prop_assert!(next >= running);
            running = next;
        }
        prop_assert_eq!(running, result.best_final_metric);
        prop_assert!(result.best_final_metric >= result.trajectory[0].final_metric);
        Ok(())
    })
}

/// Ranks with ties sharing their mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = mean;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Grid-tunes `n_families` random bench families and returns the pair
/// count and Spearman rho between card similarity and closeness of their
/// optimal learning rates.
pub fn similarity_optimum_correlation(n_families: usize, seed: u64) -> Result<(usize, f64), String> {
    let model = bench_model_card();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tuned = Vec::with_capacity(n_families);
    for i in 0..n_families {
        let family = random_family(&format!("corr-{i}"), &mut rng).map_err(|e| e.to_string())?;
        let (record, card) = tune_family(&family, &model).map_err(|e| e.to_string())?;
        let lr = record
            .config
            .get_f64("learning_rate")
            .ok_or("record lacks learning_rate")?;
        tuned.push((card, lr));
    }
    let mut sims = Vec::new();
    let mut closeness = Vec::new();
    for i in 0..tuned.len() {
        for j in i + 1..tuned.len() {
            let (ca, la) = &tuned[i];
            let (cb, lb) = &tuned[j];
            sims.push(card_similarity(&HashEmbedder, ca, cb).map_err(|e| e.to_string())?);
            closeness.push(-(la.log10() - lb.log10()).abs());
        }
    }
    Ok((sims.len(), spearman(&sims, &closeness)))
}
