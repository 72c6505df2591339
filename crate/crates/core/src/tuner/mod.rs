//! Constraint grammar, greedy tuning against predicted logs, and an
//! exhaustive grid-search reference.

mod constraint;
mod grid;
mod search;

pub use constraint::{parse_constraint, BadConstraint, Constraint, Op};
pub use grid::{grid_points, grid_search_oracle, GridAxis, GridError, GridSpec};
pub use search::{propose_candidates, tune, StopReason, TrajectoryEntry, TuneError, TuneResult, MAX_EXPANSION};
