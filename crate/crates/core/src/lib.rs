//! Card-driven hyperparameter recommendation and tuning.
//!
//! Data and model cards are rendered into a fixed-format prompt, sent to a
//! pluggable backend that answers with a four-section plan and a predicted
//! training log, and hyperparameters for unseen datasets are transferred
//! from similar, previously tuned ones.

pub mod bench;
pub mod cards;
pub mod composer;
pub mod encoder;
pub mod oracle;
pub mod pipeline;
pub mod registry;
pub mod transfer;
pub mod tuner;
