//! Configuration, orchestration and CSV serialization for the `subheat` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv;
pub mod runner;

pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use runner::{run, CheckRow, RunError, RunReport};
