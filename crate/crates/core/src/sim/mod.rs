//! Synthetic villages and the replicated design experiment.

pub mod experiment;
pub mod generator;
pub mod summary;

pub use experiment::{
    paper_strategies, remaining_rate, run_experiment, run_on_villages, run_on_villages_resuming, ExperimentConfig,
    ExperimentResult, RunFailure, RunOutcome, RunResult, StrategySpec,
};
pub use generator::{default_villages, generate_village, GeneratorConfig, Layout, SyntheticVillage};
pub use summary::{summarize, ExperimentSummary, GroupSummary};
