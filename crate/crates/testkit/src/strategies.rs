use std::collections::BTreeSet;

use cardtune::cards::{
    DataCard, Flexibility, HyperParamConfig, HyperParamSpace, HyperParamSpec, InputType, LabelSpace, ModelCard,
    ParamDomain, ParamValue,
};
use cardtune::oracle::{LogEntry, TrainingLog};
use cardtune::registry::{MetricValue, Provenance, Registry, TuningRecord};
use proptest::prelude::*;
use proptest::sample::Index;

pub fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,9}"
}

/// Already canonical free text: single spaces, no padding.
pub fn text(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z0-9][A-Za-z0-9.,:()/+-]{0,9}", 0..=max_words).prop_map(|w| w.join(" "))
}

pub fn non_empty_text(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z0-9][A-Za-z0-9.,:()/+-]{0,9}", 1..=max_words.max(1)).prop_map(|w| w.join(" "))
}

pub fn label() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z0-9][a-z0-9'-]{0,7}", 1..=3).prop_map(|w| w.join(" "))
}

pub fn input_type() -> impl Strategy<Value = InputType> {
    prop_oneof![Just(InputType::Image), Just(InputType::Text), Just(InputType::Tabular)]
}

pub fn label_space() -> impl Strategy<Value = LabelSpace> {
    prop_oneof![
        prop::collection::btree_set(label(), 1..12).prop_map(|s| LabelSpace::Classes(s.into_iter().collect())),
        non_empty_text(8).prop_map(LabelSpace::Description),
    ]
}

pub fn metrics() -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set(ident(), 1..4).prop_map(|s| s.into_iter().collect())
}

pub fn data_card() -> impl Strategy<Value = DataCard> {
    (
        non_empty_text(3),
        input_type(),
        label_space(),
        prop::option::of(1u64..10_000_000),
        text(12),
        metrics(),
    )
        .prop_map(
            |(name, input_type, label_space, scale, task_description, eval_metrics)| DataCard {
                name,
                input_type,
                label_space,
                scale,
                task_description,
                eval_metrics,
            },
        )
}

pub fn domain() -> impl Strategy<Value = ParamDomain> {
    prop_oneof![
        (-100.0f64..100.0, 1e-3f64..1e3).prop_map(|(min, span)| ParamDomain::Linear { min, max: min + span }),
        (-8.0f64..2.0, 0.1f64..6.0).prop_map(|(lo, decades)| {
            let min = 10f64.powf(lo);
            ParamDomain::Log {
                min,
                max: min * 10f64.powf(decades),
            }
        }),
        (-100i64..100, 1i64..1000).prop_map(|(min, span)| ParamDomain::Integer { min, max: min + span }),
        prop::collection::btree_set(ident(), 1..5).prop_map(|s| ParamDomain::Categorical(s.into_iter().collect())),
    ]
}

/// A value inside `domain`, picked by a uniform fraction and an index.
pub fn value_in(domain: &ParamDomain, t: f64, idx: Index) -> ParamValue {
    match domain {
        ParamDomain::Linear { min, max } => ParamValue::Float((min + t * (max - min)).clamp(*min, *max)),
        ParamDomain::Log { min, max } => {
            ParamValue::Float((min.ln() + t * (max.ln() - min.ln())).exp().clamp(*min, *max))
        }
        ParamDomain::Integer { min, max } => {
            ParamValue::Int(min + ((t * (max - min) as f64).round() as i64).clamp(0, max - min))
        }
        ParamDomain::Categorical(options) => ParamValue::Text(idx.get(options).clone()),
    }
}

pub fn spec(name: String) -> impl Strategy<Value = HyperParamSpec> {
    (domain(), 0.0f64..=1.0, any::<Index>(), any::<bool>()).prop_map(move |(domain, t, idx, tunable)| HyperParamSpec {
        name: name.clone(),
        default: value_in(&domain, t, idx),
        domain,
        flexibility: if tunable {
            Flexibility::Tunable
        } else {
            Flexibility::Fixed
        },
    })
}

pub fn space() -> impl Strategy<Value = HyperParamSpace> {
    prop::collection::btree_set(ident(), 1..6).prop_flat_map(|names| {
        names
            .into_iter()
            .map(spec)
            .collect::<Vec<_>>()
            .prop_map(HyperParamSpace::new)
    })
}

pub fn model_card() -> impl Strategy<Value = ModelCard> {
    (non_empty_text(3), text(10), text(10), space()).prop_map(|(name, structure, description, arch_hparams)| {
        ModelCard {
            name,
            structure,
            description,
            arch_hparams,
        }
    })
}

/// Complete config drawn inside `space`.
pub fn config_in(space: &HyperParamSpace) -> impl Strategy<Value = HyperParamConfig> {
    let domains: Vec<(String, ParamDomain)> = space.iter().map(|s| (s.name.clone(), s.domain.clone())).collect();
    let n = domains.len();
    (
        prop::collection::vec(0.0f64..=1.0, n),
        prop::collection::vec(any::<Index>(), n),
    )
        .prop_map(move |(ts, idxs)| {
            let mut cfg = HyperParamConfig::new();
            for (((name, domain), t), idx) in domains.iter().zip(ts).zip(idxs) {
                cfg.insert(name.clone(), value_in(domain, t, idx));
            }
            cfg
        })
}

fn ten_thousandths(max: u32) -> impl Strategy<Value = f64> {
    (0..=max).prop_map(|k| k as f64 / 10_000.0)
}

pub fn training_log() -> impl Strategy<Value = TrainingLog> {
    prop::collection::vec(
        (
            ten_thousandths(200_000),
            ten_thousandths(200_000),
            ten_thousandths(10_000),
        ),
        1..40,
    )
    .prop_map(|rows| {
        let entries = rows
            .into_iter()
            .enumerate()
            .map(|(i, (train_loss, val_loss, val_metric))| LogEntry {
                epoch: i as u32 + 1,
                train_loss,
                val_loss,
                val_metric,
            })
            .collect();
        TrainingLog::new(entries).unwrap()
    })
}

pub fn provenance() -> impl Strategy<Value = Provenance> {
    prop_oneof![
        Just(Provenance::GridSearch),
        Just(Provenance::Manual),
        Just(Provenance::Backend)
    ]
}

/// Registry with one model card and records on distinct datasets.
pub fn registry() -> impl Strategy<Value = Registry> {
    model_card()
        .prop_flat_map(|model| {
            let record = (
                data_card(),
                config_in(model.space()),
                any::<Index>(),
                -1e3f64..1e3,
                provenance(),
                0i64..4_000_000_000,
            );
            (Just(model), prop::collection::vec(record, 0..6))
        })
        .prop_map(|(model, rows)| {
            let mut reg = Registry::new();
            reg.register_model_card(model.clone());
            let mut seen = BTreeSet::new();
            for (card, config, idx, value, provenance, created_at) in rows {
                if !seen.insert(card.name.to_lowercase()) {
                    continue;
                }
                let metric = idx.get(&card.eval_metrics).clone();
                reg.add_record(TuningRecord {
                    data_card: card,
                    model_card_name: model.name.clone(),
                    config,
                    best_metric: MetricValue { name: metric, value },
                    provenance,
                    created_at,
                })
                .unwrap();
            }
            reg
        })
}
