//! Experiment harness for the `samcmc` toolkit: config loading, single and
//! replicated runs, oracle printing and file output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod replicate;

pub use config::{load_config, load_config_unchecked, ExperimentConfig, Mode};
pub use replicate::{run_replications, EfficiencyReport, HarnessError, RunSummary};
