//! Training loop, threshold tuning, scoring and run aggregation.

mod config;
mod eval;
pub mod experiment;
mod runs;
mod train;

pub use config::{parse_edges, TrainConfig, CONFIG_KEYS};
pub use eval::{
    all_probabilities, evaluate, evaluate_model, f1, gold_labels, predict, predict_set,
    threshold_grid, tune_threshold, EvalReport, RelationCounts,
};
pub use runs::{
    bootstrap_significance, median_of_runs, BootstrapResult, RunAggregate, BOOTSTRAP_SAMPLES,
    RUNS_PER_CONFIG,
};
pub use train::{fresh_model, train, train_step, EpochLog, TrainOutcome};

#[cfg(test)]
mod tests;
