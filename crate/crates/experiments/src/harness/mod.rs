//! Config-driven experiments: sweeps over look-ahead or forecast noise, exact
//! or sampled regret, and CSV output.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, SweepPoint};
pub use report::{emit_csv, read_csv, summary_path, RegretReport, SweepSummary, TrialRow};
pub use runner::{analyze, describe, evaluate, run_sweep, run_sweep_with, run_trial, trial_seed, Environment, Prepared};
