//! Command-line harness: scenario configs, CSV traces, offline
//! identification replays and the canned benchmark suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod suites;
pub mod trace_csv;

pub use config::Config;
pub use error::{CliError, CliResult};
pub use suites::Suite;
