//! Datasets, experiment configs, seeded runs, sweeps and persistence.

mod config;
mod dataset;
mod run;
mod stats;
mod sweep;

pub use config::{ExperimentConfig, ModelSpec, OptimizerSection, PipelineSection, Runner};
pub use dataset::{gen_dataset, Dataset, DatasetKind, DatasetSpec};
pub use run::{run_experiment, run_id, run_seed, ExperimentOutput, ExperimentSummary, RunSummary};
pub use stats::{mean, std_dev, welch_greater, WelchTest};
pub use sweep::{set_param, sweep, SweepResult, SweepRow};
