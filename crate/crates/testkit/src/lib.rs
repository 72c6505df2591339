//! Shared test support: loaders for the workspace fixtures and proptest
//! strategies producing valid cards, logs and registries, and the property
//! checks built on them.

pub mod fixtures;
pub mod properties;
pub mod strategies;
