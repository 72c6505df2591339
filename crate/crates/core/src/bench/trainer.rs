use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::data::{SyntheticDataset, FEATURE_DIM};
use crate::cards::{HyperParamConfig, ParamValue};
use crate::oracle::{LogEntry, TrainingLog};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}")]
    DivergedTraining { epoch: u32 },
    #[error("config lacks a usable `{0}`")]
    MissingParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: u32,
}

impl TrainSettings {
    pub fn from_config(config: &HyperParamConfig) -> Result<Self, TrainError> {
        let float = |name: &'static str| {
            config
                .get_f64(name)
                .filter(|x| x.is_finite() && *x >= 0.0)
                .ok_or(TrainError::MissingParameter(name))
        };
        let int = |name: &'static str| match config.get(name) {
            Some(ParamValue::Int(i)) if *i >= 1 => Ok(*i),
            _ => Err(TrainError::MissingParameter(name)),
        };
        Ok(TrainSettings {
            learning_rate: float("learning_rate")?,
            weight_decay: float("weight_decay")?,
            batch_size: int("batch_size")? as usize,
            epochs: u32::try_from(int("epochs")?).map_err(|_| TrainError::MissingParameter("epochs"))?,
        })
    }
}

struct Model {
    k: usize,
    w: Vec<f64>, // FEATURE_DIM x k, row-major
    b: Vec<f64>,
}

impl Model {
    fn probs(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.b[c];
        }
        for (j, xj) in x.iter().enumerate() {
            let row = &self.w[j * self.k..(j + 1) * self.k];
            for (o, wjc) in out.iter_mut().zip(row) {
                *o += xj * wjc;
            }
        }
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }

    /// Mean cross-entropy and accuracy. The loss is `-ln p_y` of the
    /// normalized probabilities, so it becomes infinite once `p_y`
    /// underflows.
    fn evaluate(&self, xs: &[f64], ys: &[usize]) -> (f64, f64) {
        let mut p = vec![0.0; self.k];
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (x, &y) in xs.chunks_exact(FEATURE_DIM).zip(ys) {
            self.probs(x, &mut p);
            loss -= p[y].ln();
            let mut arg = 0;
            for c in 1..self.k {
                if p[c] > p[arg] {
                    arg = c;
                }
            }
            correct += usize::from(arg == y);
        }
        let n = ys.len().max(1) as f64;
        (loss / n, correct as f64 / n)
    }
}

/// Multinomial logistic regression trained by shuffled mini-batch gradient
/// descent with L2 decay. Weights start from a seeded standard normal draw.
pub fn train_tiny(dataset: &SyntheticDataset, config: &HyperParamConfig, seed: u64) -> Result<TrainingLog, TrainError> {
    train_with(dataset, TrainSettings::from_config(config)?, seed)
}

pub fn train_with(dataset: &SyntheticDataset, s: TrainSettings, seed: u64) -> Result<TrainingLog, TrainError> {
    let k = dataset.n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model {
        k,
        w: (0..FEATURE_DIM * k).map(|_| rng.sample(StandardNormal)).collect(),
        b: vec![0.0; k],
    };
    let n = dataset.n_train();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad_w = vec![0.0; FEATURE_DIM * k];
    let mut grad_b = vec![0.0; k];
    let mut p = vec![0.0; k];
    let mut entries = Vec::with_capacity(s.epochs as usize);
    for epoch in 1..=s.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(s.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let x = &dataset.train_x[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
                model.probs(x, &mut p);
                p[dataset.train_y[i]] -= 1.0;
                for (j, xj) in x.iter().enumerate() {
                    let row = &mut grad_w[j * k..(j + 1) * k];
                    for (g, pc) in row.iter_mut().zip(&p) {
                        *g += xj * pc;
                    }
                }
                for (g, pc) in grad_b.iter_mut().zip(&p) {
                    *g += pc;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for (w, g) in model.w.iter_mut().zip(&grad_w) {
                *w -= s.learning_rate * (g * scale + s.weight_decay * *w);
            }
            for (b, g) in model.b.iter_mut().zip(&grad_b) {
                *b -= s.learning_rate * g * scale;
            }
        }
        let (train_loss, _) = model.evaluate(&dataset.train_x, &dataset.train_y);
        let (val_loss, val_acc) = model.evaluate(&dataset.val_x, &dataset.val_y);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(TrainError::DivergedTraining { epoch });
        }
        entries.push(LogEntry {
            epoch,
            train_loss,
            val_loss,
            val_metric: val_acc,
        });
    }
    Ok(TrainingLog::new(entries).expect("trainer emits consecutive epochs"))
}
