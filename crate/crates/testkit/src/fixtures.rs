use std::path::PathBuf;

use cardtune::cards::{parse_data_card, parse_model_card, DataCard, HyperParamConfig, ModelCard, ParamValue};
use cardtune::registry::{MetricValue, Provenance, Registry, TuningRecord};

/// The workspace `fixtures/` directory.
pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn data_card(name: &str) -> DataCard {
    let path = fixtures().join("cards").join(format!("{name}.json"));
    parse_data_card(&std::fs::read(&path).unwrap()).unwrap()
}

pub fn model_card(name: &str) -> ModelCard {
    let path = fixtures().join("cards").join(format!("{name}.json"));
    parse_model_card(&std::fs::read(&path).unwrap()).unwrap()
}

/// (data card, model card, golden prompt file) for the three walkthroughs.
pub const SCENARIOS: [(&str, &str, &str); 3] = [
    ("coco", "detector", "coco_detector.txt"),
    ("nq", "dpr", "nq_dpr.txt"),
    ("uci-adult", "xgboost", "uci-adult_xgboost.txt"),
];

fn vit_config(lr: f64, epochs: i64) -> HyperParamConfig {
    HyperParamConfig::new()
        .with("learning_rate", ParamValue::Float(lr))
        .with("epochs", ParamValue::Int(epochs))
        .with("optimizer", ParamValue::Text("adamw".into()))
}

/// Registry with vit-base tuned on A (lr 1e-4) and B (lr 1e-5).
pub fn two_neighbor_registry() -> Registry {
    let mut reg = Registry::new();
    reg.register_model_card(model_card("vit"));
    for (card, lr, epochs, acc) in [("a", 1e-4, 90, 0.81), ("b", 1e-5, 40, 0.77)] {
        reg.add_record(TuningRecord {
            data_card: data_card(card),
            model_card_name: "vit-base".into(),
            config: vit_config(lr, epochs),
            best_metric: MetricValue {
                name: "accuracy".into(),
                value: acc,
            },
            provenance: Provenance::Manual,
            created_at: 1_700_000_000,
        })
        .unwrap();
    }
    reg
}

pub fn update_golden() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_fixtures_exist() {
        for (data, model, prompt) in SCENARIOS {
            data_card(data);
            model_card(model);
            assert!(fixtures().join("prompts").join(prompt).is_file(), "{prompt}");
        }
    }

    #[test]
    fn neighbors_share_the_registered_model() {
        let reg = two_neighbor_registry();
        assert_eq!(reg.records().len(), 2);
        assert!(reg
            .records()
            .iter()
            .all(|r| r.model_card_name == model_card("vit").name));
    }
}
