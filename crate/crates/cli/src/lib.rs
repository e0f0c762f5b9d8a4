//! Configuration, file formats and subcommands behind the `snapzip` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
