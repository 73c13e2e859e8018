//! Synthetic data, scoring and the initialization comparison experiment.

pub mod corpus;
pub mod experiment;
pub mod metrics;

pub use corpus::{count_degenerate, gen_corpus, CorpusConfig, SyntheticCorpus, SPACE_ID};
pub use experiment::{
    initialize_arm, run_experiment, run_experiment_observed, train_items, train_rnnt, write_metrics_csv, Arm,
    ArmSummary, ExperimentConfig, ExperimentObserver, ExperimentReport, ExperimentSummary, MetricsRow, TrainItem,
};
pub use metrics::{edit_distance, evaluate, Evaluation};
