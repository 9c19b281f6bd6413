//! Experiment driver: configuration, the target/shadow pipeline, trial
//! aggregation and report emission.

mod config;
mod pipeline;
mod report;

pub use config::{DatasetSpec, ExperimentConfig, PartitionSpec, SparsitySpec, SparsityVariant};
pub use pipeline::{load_dataset, run_experiment, run_pipeline, train_variant, TrialResult, TrainedVariant};
pub use report::{
    aggregate, emit_report, intervals_disjoint, mean_std, read_report, tradeoff_ratio, LevelSummary, Report, Stat,
};
