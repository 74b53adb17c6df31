//! Command-line driver: configuration, subcommands and artifacts.

pub mod app;
pub mod artifacts;
pub mod commands;
pub mod config;

pub use app::{run, Cli, Command, EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK};
pub use config::{parse_config, ConfigError, RunConfig};
