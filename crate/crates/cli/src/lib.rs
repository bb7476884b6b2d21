//! Batch experiment runner: `fracwave <command> --config <path> [--seed N] [--out DIR]`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_for, Command, ConfigErrors, ExperimentConfig};
pub use run::{compute, content_hash, run, RunError, RunSummary};
