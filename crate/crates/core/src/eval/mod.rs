//! Metrics, the round-and-clamp protocol, reports, experiment configuration and the training
//! driver shared by the relational counter and the baselines.

pub mod config;
pub mod metrics;
pub mod report;
pub mod train;

pub use config::{BaselineSettings, ExperimentConfig, TrainConfig, DEFAULT_CONFIG_TOML};
pub use metrics::{accuracy, histogram, positional_subset_report, rmse, round_clamp, SubsetReport};
pub use report::{histogram_table, results_table, template_table, ComparisonStats, EpochLog, EvalReport, SplitReport, TrainingLog};
pub use train::{evaluate, predict_all, train_loop, CountModel, ModelKind, TrainOutcome};
