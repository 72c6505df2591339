//! Synthetic task families, a small real trainer, and the unseen-dataset
//! benchmark comparing transferred, random and default configurations.

mod data;
mod harness;
mod trainer;

pub use data::{
    family_card, generate_task, sigma_bucket, sigma_descriptor, FamilyError, SyntheticDataset, TaskFamily, FEATURE_DIM,
    SAMPLES_PER_CLASS, VOCABULARY,
};
pub use harness::{
    bench_model_card, build_registry, default_seeds, final_accuracy, lr_grid, random_config, random_family, run_trial,
    run_unseen_benchmark, tune_family, ArmResult, BenchError, BenchReport, TrialResult, BENCH_MODEL_NAME, CLASS_RANGE,
    SIGMA_RANGE,
};
pub use trainer::{train_tiny, train_with, TrainError, TrainSettings};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cards::ParamValue;
    use crate::encoder::{card_similarity, HashEmbedder};
    use crate::transfer::TransferParams;

    fn family(id: &str, sigma: f64, names: &[&str], seed: u64) -> TaskFamily {
        TaskFamily {
            family_id: id.into(),
            sigma,
            n_classes: names.len(),
            class_names: names.iter().map(|s| s.to_string()).collect(),
            seed,
        }
    }

    fn config(lr: f64) -> crate::cards::HyperParamConfig {
        bench_model_card()
            .space()
            .defaults()
            .with("learning_rate", ParamValue::Float(lr))
    }

    #[test]
    fn generation_is_deterministic() {
        let f = family("f", 1.0, &["acorn", "apple", "anchor"], 7);
        let (a, ca) = generate_task(&f).unwrap();
        let (b, cb) = generate_task(&f).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert_eq!(a.n_train() + a.n_val(), 3 * SAMPLES_PER_CLASS);
        assert_eq!(a.n_train(), 480);
        let other = generate_task(&TaskFamily { seed: 8, ..f }).unwrap().0;
        assert_ne!(a, other);
    }

    #[test]
    fn shared_names_raise_similarity() {
        let base = ["acorn", "apple", "anchor", "arrow", "badger"];
        let sixty = ["acorn", "apple", "anchor", "zephyr", "yarrow"];
        let none = ["willow", "wombat", "walnut", "violet", "velvet"];
        let card = |names: &[&str]| family_card(&family("x", 1.0, names, 1));
        let s60 = card_similarity(&HashEmbedder, &card(&base), &card(&sixty)).unwrap();
        let s0 = card_similarity(&HashEmbedder, &card(&base), &card(&none)).unwrap();
        assert!(s60 > s0, "{s60} <= {s0}");
    }

    #[test]
    fn nearby_spread_is_more_similar() {
        let names = ["acorn", "apple"];
        let card = |sigma| family_card(&family("x", sigma, &names, 1));
        let near = card_similarity(&HashEmbedder, &card(1.0), &card(1.2)).unwrap();
        let far = card_similarity(&HashEmbedder, &card(1.0), &card(4.0)).unwrap();
        assert!(near > far);
    }

    #[test]
    fn two_tight_clusters_are_separable() {
        let (ds, _) = generate_task(&family("sep", 0.1, &["acorn", "apple"], 3)).unwrap();
        let log = train_tiny(&ds, &config(0.1), 3).unwrap();
        assert!(log.final_metric().unwrap() >= 0.99);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let (ds, _) = generate_task(&family("div", 1.0, &VOCABULARY[..10], 5)).unwrap();
        assert!(matches!(
            train_tiny(&ds, &config(1e3), 5),
            Err(TrainError::DivergedTraining { .. })
        ));
    }

    #[test]
    fn zero_learning_rate_does_not_learn() {
        let names = &VOCABULARY[..10];
        let mut total = 0.0;
        for seed in 0..8 {
            let (ds, _) = generate_task(&family("zero", 1.0, names, seed)).unwrap();
            let log = train_tiny(&ds, &config(0.0), seed).unwrap();
            let first = log.entries()[0].val_metric;
            assert!(log.entries().iter().all(|e| e.val_metric == first));
            total += first;
        }
        // untrained accuracy averages out near chance
        assert!((total / 8.0 - 0.1).abs() < 0.1, "{}", total / 8.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (ds, _) = generate_task(&family("det", 1.5, &VOCABULARY[..4], 9)).unwrap();
        assert_eq!(
            train_tiny(&ds, &config(0.3), 1).unwrap(),
            train_tiny(&ds, &config(0.3), 1).unwrap()
        );
    }

    #[test]
    fn benchmark_guards() {
        assert!(matches!(
            run_unseen_benchmark(0, &[1], TransferParams::default()),
            Err(BenchError::TooFewKnown(0))
        ));
        assert!(matches!(
            run_unseen_benchmark(6, &[], TransferParams::default()),
            Err(BenchError::NoTrials)
        ));
    }

    #[test]
    fn held_out_copy_of_known_family_matches_its_grid_result() {
        let mut rng = rand::SeedableRng::seed_from_u64(11);
        let known = random_family("known", &mut rng).unwrap();
        let registry = build_registry(std::slice::from_ref(&known)).unwrap();
        let grid_acc = registry.records()[0].best_metric.value;
        let trial = run_trial(0, known, &registry, TransferParams::default(), &mut rng).unwrap();
        assert!(trial.recommended.accuracy >= grid_acc - 0.02);
        assert_eq!(trial.recommended.config, registry.records()[0].config);
    }

    #[test]
    fn invalid_families_rejected() {
        assert!(TaskFamily::random_names("x", 1.0, 1, 0).is_err());
        assert!(TaskFamily::random_names("x", 0.0, 3, 0).is_err());
        assert!(family("x", 1.0, &["acorn", "acorn"], 0).validate().is_err());
        assert!(family("x", 1.0, &["notaword", "acorn"], 0).validate().is_err());
    }
}
