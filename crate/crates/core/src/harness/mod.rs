//! Seeded multi-trial experiments over a policy × budget grid.

pub mod config;
pub mod report;
pub mod runner;
pub mod seed;

pub use config::{BudgetSpec, EnvironmentConfig, ExperimentConfig, PolicyConfig};
pub use report::{format_table, read_summary, summary_csv, write_outputs, SummaryRow};
pub use runner::{
    run_experiment, run_trial, run_with_source, sweep, sweep_config, CellSummary, EnvironmentSource,
    ExperimentSummary, PolicyStreams, RegretSummary, StepRecord, SweepParam, TrialResult,
};
pub use seed::{derive_seed, environment_seed, policy_seed};
