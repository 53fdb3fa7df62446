//! File formats and command implementations behind the `wdmoe` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_run, cmd_sweep, cmd_validate, CliError};
