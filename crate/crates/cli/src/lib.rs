//! Experiment runner for the adaptive LQG library: config loading, batch
//! seeding and artifact emission.

pub mod args;
pub mod artifacts;
pub mod commands;

pub use args::{Cli, Command, RunArgs};
pub use commands::{cmd_audit, cmd_oracle, cmd_run, CliError, Exit, RunReport};
