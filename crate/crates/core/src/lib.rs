//! Concept-bottleneck networks trained jointly on a decision task and a multi-label
//! concept task, with concept labels from expert-rule distant supervision.
//!
//! * [`nn`]: dense layers, losses, backpropagation, SGD.
//! * [`model`]: the bottleneck model and its weighted meta-loss.
//! * [`weak_labels`]: rule-to-concept maps and annotation.
//! * [`synth`]: synthetic fraud datasets with calibrated label noise.
//! * [`training`]: batch composition and the supervised, two-stage and hybrid strategies.
//! * [`eval`]: recall at a false-positive-rate target, AP / mAP, Pareto fronts.
//! * [`experiment`]: config files, grids, result tables, plots.

pub mod dataset;
mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod nn;
pub mod synth;
pub mod training;
pub mod weak_labels;

pub use error::{Error, Result};
