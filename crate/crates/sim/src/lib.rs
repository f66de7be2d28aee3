//! Monte Carlo harness, file formats and command line for `dkf-core`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod seed;
pub mod selftest;

pub use config::{load_config, ExperimentConfig};
pub use error::{ConfigError, Result, SimError};
pub use experiment::{policy_sweep, run_experiment, ExperimentReport, RunOptions};
