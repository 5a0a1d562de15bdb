//! Scenario files, generation and the command implementations of `uavcol`.

pub mod commands;
pub mod config;
pub mod generate;
pub mod scenario_file;

pub use commands::{CliError, CliResult};
pub use config::{RunConfig, SchemeSelector};
pub use generate::{generate_scenario, Template};
pub use scenario_file::{ScenarioFile, ScenarioFileError};
