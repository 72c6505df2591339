use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::{DataCard, InputType, LabelSpace};
use crate::encoder::fnv1a64;

pub const FEATURE_DIM: usize = 16;
pub const SAMPLES_PER_CLASS: usize = 200;
pub const MEAN_RADIUS: f64 = 3.0;
pub const TRAIN_FRACTION: f64 = 0.8;

pub const VOCABULARY: [&str; 100] = [
    "acorn", "anchor", "apple", "arrow", "badger", "banjo", "barrel", "beacon", "beetle", "bison", "blossom",
    "boulder", "bramble", "bucket", "cactus", "canoe", "canyon", "carrot", "castle", "cedar", "cherry", "cobra",
    "comet", "copper", "coral", "cricket", "crystal", "dagger", "dolphin", "dragon", "eagle", "ember", "falcon",
    "feather", "fern", "ferret", "fiddle", "flint", "forest", "fossil", "garnet", "gecko", "glacier", "goblet",
    "granite", "harbor", "hazel", "heron", "hornet", "iguana", "island", "jackal", "jasper", "kettle", "lagoon",
    "lantern", "lemon", "lizard", "lotus", "magnet", "maple", "marble", "meadow", "meteor", "mirror", "moose",
    "nectar", "nutmeg", "oasis", "olive", "orchid", "otter", "panther", "pebble", "pepper", "pigeon", "pine", "quartz",
    "quill", "raven", "reef", "saddle", "salmon", "sparrow", "spruce", "summit", "thistle", "thunder", "tiger",
    "timber", "topaz", "tulip", "tundra", "velvet", "violet", "walnut", "willow", "wombat", "yarrow", "zephyr",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FamilyError {
    #[error("n_classes must lie in [2, 15], got {0}")]
    ClassCount(usize),
    #[error("sigma must be positive and finite")]
    Sigma,
    #[error("class names must be {expected} distinct vocabulary words")]
    ClassNames { expected: usize },
}

/// A synthetic classification task: Gaussian clusters whose spread is
/// `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFamily {
    pub family_id: String,
    pub sigma: f64,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub seed: u64,
}

impl TaskFamily {
    /// Family with `n_classes` names drawn from the vocabulary by `seed`.
    pub fn random_names(family_id: &str, sigma: f64, n_classes: usize, seed: u64) -> Result<Self, FamilyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(b"class-names") ^ fnv1a64(family_id.as_bytes()));
        let names = VOCABULARY
            .choose_multiple(&mut rng, n_classes.min(VOCABULARY.len()))
            .map(|s| s.to_string())
            .collect();
        let f = TaskFamily {
            family_id: family_id.to_string(),
            sigma,
            n_classes,
            class_names: names,
            seed,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), FamilyError> {
        if !(2..=15).contains(&self.n_classes) {
            return Err(FamilyError::ClassCount(self.n_classes));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(FamilyError::Sigma);
        }
        let mut names = self.class_names.clone();
        names.sort();
        names.dedup();
        if names.len() != self.n_classes
            || self.class_names.len() != self.n_classes
            || !names.iter().all(|n| VOCABULARY.contains(&n.as_str()))
        {
            return Err(FamilyError::ClassNames {
                expected: self.n_classes,
            });
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(self.family_id.as_bytes()))
    }
}

/// Row-major features with an 80/20 split already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub n_classes: usize,
    pub train_x: Vec<f64>,
    pub train_y: Vec<usize>,
    pub val_x: Vec<f64>,
    pub val_y: Vec<usize>,
}

impl SyntheticDataset {
    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }

    pub fn n_val(&self) -> usize {
        self.val_y.len()
    }
}

/// Spread bucket: half-octave steps of sigma, `round(2 log2 sigma)`.
pub fn sigma_bucket(sigma: f64) -> i64 {
    (2.0 * sigma.log2()).round() as i64
}

fn bucket_token(b: i64) -> String {
    if b < 0 {
        format!("spreadm{}", -b)
    } else {
        format!("spreadp{b}")
    }
}

/// Descriptor tokens for a spread bucket, repeated by closeness so that
/// cards with nearby buckets share most of their weight.
pub fn sigma_descriptor(sigma: f64) -> String {
    let b = sigma_bucket(sigma);
    let mut words = Vec::new();
    for offset in -3i64..=3 {
        let reps = 4 - offset.unsigned_abs() as usize;
        for _ in 0..reps {
            words.push(bucket_token(b + offset));
        }
    }
    words.join(" ")
}

pub fn family_card(family: &TaskFamily) -> DataCard {
    DataCard {
        name: family.family_id.clone(),
        input_type: InputType::Tabular,
        label_space: LabelSpace::Classes(family.class_names.clone()),
        scale: Some((family.n_classes * SAMPLES_PER_CLASS) as u64),
        task_description: format!("gaussian cluster classification {}", sigma_descriptor(family.sigma)),
        eval_metrics: vec!["accuracy".to_string()],
    }
}

pub fn generate_task(family: &TaskFamily) -> Result<(SyntheticDataset, DataCard), FamilyError> {
    family.validate()?;
    let mut rng = family.rng();
    let k = family.n_classes;
    let means: Vec<[f64; FEATURE_DIM]> = (0..k)
        .map(|_| {
            let mut m = [0.0; FEATURE_DIM];
            for v in m.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            for v in m.iter_mut() {
                *v *= MEAN_RADIUS / norm;
            }
            m
        })
        .collect();
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(k * SAMPLES_PER_CLASS);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..SAMPLES_PER_CLASS {
            let x = mean
                .iter()
                .map(|m| m + family.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push((x, c));
        }
    }
    rows.shuffle(&mut rng);
    let n_train = (rows.len() as f64 * TRAIN_FRACTION).round() as usize;
    let mut ds = SyntheticDataset {
        n_classes: k,
        train_x: Vec::with_capacity(n_train * FEATURE_DIM),
        train_y: Vec::with_capacity(n_train),
        val_x: Vec::new(),
        val_y: Vec::new(),
    };
    for (i, (x, y)) in rows.into_iter().enumerate() {
        if i < n_train {
            ds.train_x.extend(x);
            ds.train_y.push(y);
        } else {
            ds.val_x.extend(x);
            ds.val_y.push(y);
        }
    }
    Ok((ds, family_card(family)))
}
