//! Experiment runner: training runs with aggregated metrics, landmark
//! sweeps, and the distance-leakage attack grid.

pub mod attack;
pub mod config;
pub mod experiment;
pub mod output;

pub use attack::run_attack;
pub use config::{Protocol, RunConfig, SeedRegime};
pub use experiment::{run_experiment, run_sweep, ExperimentReport, MetricsRow, RunRecord, Splits};
