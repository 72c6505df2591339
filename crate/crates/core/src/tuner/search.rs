use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::constraint::Constraint;
use crate::cards::{DataCard, HyperParamConfig, HyperParamSpace, ModelCard, ParamDomain, ParamValue};
use crate::composer::compose_prompt;
use crate::oracle::{query, Backend, OracleError, TrainingLog, LR_STEP_DECADES};
use crate::transfer::Recommendation;

/// Largest step doubling applied on flat rounds: 2^6 quarter-decades.
pub const MAX_EXPANSION: u32 = 6;

/// One step of a numeric parameter, up or down, clamped to its domain.
/// Log steps are `10^(0.25 * 2^expansion)`, linear steps `10% * 2^expansion`
/// of the span and integer steps `2^expansion`.
fn step(domain: &ParamDomain, current: &ParamValue, expansion: u32, up: bool) -> Option<ParamValue> {
    let scale = 2f64.powi(expansion as i32);
    match (domain, current) {
        (ParamDomain::Log { min, max }, v) => {
            let x = v.as_f64().filter(|x| *x > 0.0)?;
            let f = 10f64.powf(LR_STEP_DECADES * scale);
            Some(ParamValue::Float((if up { x * f } else { x / f }).clamp(*min, *max)))
        }
        (ParamDomain::Linear { min, max }, v) => {
            let x = v.as_f64()?;
            let d = 0.1 * (max - min) * scale;
            Some(ParamValue::Float((if up { x + d } else { x - d }).clamp(*min, *max)))
        }
        (ParamDomain::Integer { min, max }, ParamValue::Int(i)) => {
            let d = 1i64.checked_shl(expansion).unwrap_or(i64::MAX);
            let next = if up { i.saturating_add(d) } else { i.saturating_sub(d) };
            Some(ParamValue::Int(next.clamp(*min, *max)))
        }
        _ => None,
    }
}

/// Coordinate neighbors of `center`: the center first, then for each
/// tunable parameter in name order a down-step and an up-step (see
/// [`step`]); categoricals yield every alternative. Steps that clamp back
/// onto the center are dropped.
pub fn propose_candidates(center: &HyperParamConfig, space: &HyperParamSpace, expansion: u32) -> Vec<HyperParamConfig> {
    let center = space.complete(center);
    let mut out = vec![center.clone()];
    for spec in space.iter().filter(|s| s.is_tunable()) {
        let Some(current) = center.get(&spec.name) else {
            continue;
        };
        let moves: Vec<ParamValue> = match &spec.domain {
            ParamDomain::Categorical(options) => options.iter().map(|o| ParamValue::Text(o.clone())).collect(),
            d => [false, true]
                .into_iter()
                .filter_map(|up| step(d, current, expansion, up))
                .collect(),
        };
        for v in moves {
            if same_value(&v, current) {
                continue;
            }
            let mut cand = center.clone();
            cand.insert(spec.name.clone(), v);
            if !out.contains(&cand) {
                out.push(cand);
            }
        }
    }
    out
}

/// If `to` differs from `from` in a single numeric parameter, the same step
/// taken once more from `to`; `None` when that step is blocked by the
/// domain.
fn continue_step(
    from: &HyperParamConfig,
    to: &HyperParamConfig,
    space: &HyperParamSpace,
    expansion: u32,
) -> Option<HyperParamConfig> {
    let mut changed = to.iter().filter(|(k, v)| from.get(k) != Some(v));
    let (name, new) = changed.next()?;
    if changed.next().is_some() {
        return None;
    }
    let up = new.as_f64()? > from.get(name)?.as_f64()?;
    let next = step(&space.get(name)?.domain, new, expansion, up)?;
    if same_value(&next, new) {
        return None;
    }
    let mut out = to.clone();
    out.insert(name.clone(), next);
    Some(out)
}

fn same_value(a: &ParamValue, b: &ParamValue) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    Converged,
    AllFiltered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub config: HyperParamConfig,
    pub final_metric: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_config: HyperParamConfig,
    pub best_final_metric: f64,
    pub best_log: TrainingLog,
    pub best_reported_metrics: BTreeMap<String, f64>,
    pub trajectory: Vec<TrajectoryEntry>,
    pub queries_used: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("budget must be at least 1")]
    InvalidBudget,
    #[error("seed configuration is invalid: {0}")]
    InvalidSeed(String),
    #[error("every evaluated configuration violates the constraints")]
    AllCandidatesFiltered,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl TuneError {
    pub fn code(&self) -> &'static str {
        match self {
            TuneError::InvalidBudget => "invalid_budget",
            TuneError::InvalidSeed(_) => "invalid_seed",
            TuneError::AllCandidatesFiltered => "all_candidates_filtered",
            TuneError::Oracle(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone)]
struct Eval {
    metric: f64,
    feasible: bool,
    log: TrainingLog,
    reported: BTreeMap<String, f64>,
}

impl Eval {
    /// Feasibility first, then final metric.
    fn beats(&self, other: &Eval) -> bool {
        (self.feasible, self.metric) > (other.feasible, other.metric)
    }

    fn ties(&self, other: &Eval) -> bool {
        self.feasible == other.feasible && self.metric == other.metric
    }
}

/// Constraints on configuration keys are decidable before querying.
fn passes_pre_query(config: &HyperParamConfig, constraints: &[Constraint]) -> bool {
    constraints.iter().all(|c| match config.get_f64(&c.metric) {
        Some(x) => c.is_satisfied_by(x),
        None => true,
    })
}

/// Post-query check against the final log entry, the backend's reported
/// metrics and the configuration. A metric found nowhere counts as violated.
fn passes_post_query(
    config: &HyperParamConfig,
    log: &TrainingLog,
    reported: &BTreeMap<String, f64>,
    constraints: &[Constraint],
) -> bool {
    let last = log.last();
    constraints.iter().all(|c| {
        let observed = match c.metric.as_str() {
            "val_metric" => last.map(|e| e.val_metric),
            "val_loss" => last.map(|e| e.val_loss),
            "train_loss" => last.map(|e| e.train_loss),
            m => reported.get(m).copied().or_else(|| config.get_f64(m)),
        };
        observed.is_some_and(|x| c.is_satisfied_by(x))
    })
}

struct Search<'a> {
    data: &'a DataCard,
    model: &'a ModelCard,
    backend: &'a dyn Backend,
    constraints: &'a [Constraint],
    budget: usize,
    memo: HashMap<String, Eval>,
    trajectory: Vec<TrajectoryEntry>,
}

enum Outcome {
    Filtered,
    OutOfBudget,
    Done(Eval),
}

impl Search<'_> {
    fn key(config: &HyperParamConfig) -> String {
        serde_json::to_string(config).expect("configs serialize")
    }

    fn evaluate(&mut self, config: &HyperParamConfig) -> Result<Outcome, TuneError> {
        if !passes_pre_query(config, self.constraints) {
            return Ok(Outcome::Filtered);
        }
        let key = Self::key(config);
        if let Some(e) = self.memo.get(&key) {
            return Ok(Outcome::Done(e.clone()));
        }
        if self.trajectory.len() >= self.budget {
            return Ok(Outcome::OutOfBudget);
        }
        let prompt = compose_prompt(self.data, &self.model.pinned(config), &[]);
        let resp = query(self.backend, &prompt)?;
        let metric = resp.predicted_log.final_metric().unwrap_or(f64::NEG_INFINITY);
        let feasible = passes_post_query(config, &resp.predicted_log, &resp.reported_metrics, self.constraints);
        let eval = Eval {
            metric,
            feasible,
            log: resp.predicted_log,
            reported: resp.reported_metrics,
        };
        self.trajectory.push(TrajectoryEntry {
            config: config.clone(),
            final_metric: metric,
            feasible,
        });
        self.memo.insert(key, eval.clone());
        Ok(Outcome::Done(eval))
    }
}

/// Greedy coordinate search on final-epoch `val_metric` of predicted logs.
///
/// Each round evaluates the coordinate neighbors of the center and moves to
/// the best one if it strictly beats the center, then repeats that step
/// for as long as it keeps improving. A round in which every evaluated
/// neighbor ties the center doubles the step (up to [`MAX_EXPANSION`] times)
/// so that flat regions of the surface can be crossed; any move resets the
/// step. Every backend query costs one unit of
/// `budget`; repeated configurations are served from memory.
pub fn tune(
    seed: &Recommendation,
    data: &DataCard,
    model: &ModelCard,
    backend: &dyn Backend,
    constraints: &[Constraint],
    budget: usize,
) -> Result<TuneResult, TuneError> {
    if budget == 0 {
        return Err(TuneError::InvalidBudget);
    }
    let space = model.space();
    let start = space.complete(&seed.config);
    let report = space.validate(&start);
    if !report.is_ok() {
        return Err(TuneError::InvalidSeed(report.to_string()));
    }

    let mut s = Search {
        data,
        model,
        backend,
        constraints,
        budget,
        memo: HashMap::new(),
        trajectory: Vec::new(),
    };
    let mut center = start;
    let mut center_eval = match s.evaluate(&center)? {
        Outcome::Done(e) => Some(e),
        _ => None,
    };
    let mut expansion = 0;
    let stop_reason = loop {
        let candidates = propose_candidates(&center, space, expansion);
        let mut best: Option<(HyperParamConfig, Eval)> = None;
        let mut flat = true;
        let mut any_feasible = false;
        let mut evaluated = 0;
        let mut considered = 0;
        let mut out_of_budget = false;
        for cand in candidates.into_iter().skip(1) {
            considered += 1;
            let eval = match s.evaluate(&cand)? {
                Outcome::Done(e) => e,
                Outcome::Filtered => {
                    flat = false;
                    continue;
                }
                Outcome::OutOfBudget => {
                    out_of_budget = true;
                    break;
                }
            };
            evaluated += 1;
            any_feasible |= eval.feasible;
            if let Some(c) = &center_eval {
                flat &= eval.ties(c);
            } else {
                flat = false;
            }
            let improves = center_eval.as_ref().is_none_or(|c| eval.beats(c));
            if improves && best.as_ref().is_none_or(|(_, b)| eval.beats(b)) {
                best = Some((cand, eval));
            }
        }
        if let Some((mut cfg, mut eval)) = best {
            // repeat the winning step while it keeps improving
            let mut prev = center;
            while let Some(next) = continue_step(&prev, &cfg, space, expansion) {
                match s.evaluate(&next)? {
                    Outcome::Done(e) if e.beats(&eval) => {
                        prev = std::mem::replace(&mut cfg, next);
                        eval = e;
                    }
                    _ => break,
                }
            }
            center = cfg;
            center_eval = Some(eval);
            expansion = 0;
            continue;
        }
        if out_of_budget {
            break StopReason::Budget;
        }
        if evaluated > 0 && flat && expansion < MAX_EXPANSION {
            expansion += 1;
            continue;
        }
        let center_feasible = center_eval.as_ref().is_some_and(|e| e.feasible);
        break if center_feasible && considered > 0 && !any_feasible {
            StopReason::AllFiltered
        } else {
            StopReason::Converged
        };
    };

    // best feasible configuration; earliest wins ties
    let mut best: Option<(&TrajectoryEntry, &Eval)> = None;
    for entry in s.trajectory.iter().filter(|e| e.feasible) {
        let eval = &s.memo[&Search::key(&entry.config)];
        if best.is_none_or(|(b, _)| entry.final_metric > b.final_metric) {
            best = Some((entry, eval));
        }
    }
    let (entry, eval) = best.ok_or(TuneError::AllCandidatesFiltered)?;
    Ok(TuneResult {
        best_config: entry.config.clone(),
        best_final_metric: entry.final_metric,
        best_log: eval.log.clone(),
        best_reported_metrics: eval.reported.clone(),
        queries_used: s.trajectory.len(),
        trajectory: s.trajectory.clone(),
        stop_reason,
    })
}
