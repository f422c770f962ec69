//! Scenario files, run orchestration and file output for the `garz` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

pub use commands::{run, Cli};
pub use config::{load_config, ScenarioConfig};
pub use error::CliError;
