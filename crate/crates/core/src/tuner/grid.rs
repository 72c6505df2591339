use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::{HyperParamConfig, HyperParamSpace, ParamDomain, ParamValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum GridAxis {
    /// `points` values evenly spaced in log10 between `min` and `max`.
    LogUniform {
        min: f64,
        max: f64,
        points: usize,
    },
    Linear {
        min: f64,
        max: f64,
        points: usize,
    },
    Values {
        values: Vec<ParamValue>,
    },
}

impl GridAxis {
    fn floats(min: f64, max: f64, points: usize, log: bool) -> Vec<f64> {
        let (a, b) = if log { (min.log10(), max.log10()) } else { (min, max) };
        (0..points)
            .map(|i| {
                // endpoints are returned exactly so they stay inside the domain
                if i == 0 {
                    return min;
                }
                if i + 1 == points {
                    return max;
                }
                let t = a + (b - a) * i as f64 / (points - 1) as f64;
                let x = if log { 10f64.powf(t) } else { t };
                x.clamp(min.min(max), max.max(min))
            })
            .collect()
    }

    fn values(&self, domain: &ParamDomain) -> Vec<ParamValue> {
        let to_value = |x: f64| match domain {
            ParamDomain::Integer { .. } => ParamValue::Int(x.round_ties_even() as i64),
            _ => ParamValue::Float(x),
        };
        match self {
            GridAxis::LogUniform { min, max, points } => Self::floats(*min, *max, *points, true)
                .into_iter()
                .map(to_value)
                .collect(),
            GridAxis::Linear { min, max, points } => Self::floats(*min, *max, *points, false)
                .into_iter()
                .map(to_value)
                .collect(),
            GridAxis::Values { values } => values.clone(),
        }
    }
}

/// Axes in evaluation order; the first axis varies slowest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<(String, GridAxis)>,
}

impl GridSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn axis(mut self, name: &str, axis: GridAxis) -> Self {
        self.axes.push((name.to_string(), axis));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid has no points")]
    EmptyGrid,
    #[error("grid axis `{0}` is not a parameter of the space")]
    UnknownParameter(String),
    #[error("grid value {value} for `{param}` lies outside its domain")]
    OutOfDomain { param: String, value: ParamValue },
}

/// Every point of the grid, parameters off the grid held at their defaults.
pub fn grid_points(space: &HyperParamSpace, spec: &GridSpec) -> Result<Vec<HyperParamConfig>, GridError> {
    if spec.axes.is_empty() {
        return Err(GridError::EmptyGrid);
    }
    let mut points = vec![space.defaults()];
    for (name, axis) in &spec.axes {
        let domain = &space
            .get(name)
            .ok_or_else(|| GridError::UnknownParameter(name.clone()))?
            .domain;
        let values = axis.values(domain);
        if values.is_empty() {
            return Err(GridError::EmptyGrid);
        }
        if let Some(bad) = values.iter().find(|v| !domain.contains(v)) {
            return Err(GridError::OutOfDomain {
                param: name.clone(),
                value: bad.clone(),
            });
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Exhaustive search; the first point in grid order wins ties. NaN scores
/// never win.
pub fn grid_search_oracle<F>(
    space: &HyperParamSpace,
    mut evaluate: F,
    spec: &GridSpec,
) -> Result<(HyperParamConfig, f64), GridError>
where
    F: FnMut(&HyperParamConfig) -> f64,
{
    let mut best: Option<(HyperParamConfig, f64)> = None;
    for p in grid_points(space, spec)? {
        let v = evaluate(&p);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((p, v));
        }
    }
    best.ok_or(GridError::EmptyGrid)
}
