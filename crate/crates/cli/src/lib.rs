//! Command-line driver for the mvldp toolkit: config parsing and subcommand dispatch.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_for, ConfigErrors, RunConfig, Subcommand};
pub use run::{config_text_from, exit, run, CliError, RunOutcome};
