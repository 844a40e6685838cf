//! Experiment runner: datasets, training, evaluation and reports.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod metrics;
pub mod pipeline;
pub mod selftest;

pub use commands::{cmd_evaluate, cmd_generate, cmd_spectrum, cmd_train, MetricReport};
pub use config::{parse_estimators, EstimatorKind, ExperimentConfig};
