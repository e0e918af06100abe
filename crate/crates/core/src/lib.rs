//! Dependability checking for learned robot controllers.
//!
//! Sampled trajectories are abstracted into a failure-process DTMC over risk
//! levels, composed with a two-state mission-stage chain, and checked against
//! safety, resilience, robustness, detection and recovery queries written in a
//! PCTL subset.

pub mod checker;
pub mod dependability;
pub mod estimation;
pub mod model;
pub mod oracle;
pub mod pctl;
pub mod pipeline;
pub mod prism;
pub mod simenv;

pub use model::{LabeledDtmc, ModelError, Predicate, RewardStructure, StateSet, Violation};
