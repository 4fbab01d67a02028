//! `rdr` command-line tool: synthetic data, training, evaluation, comparison
//! reports, and covariate attribution over CSV files.

mod args;
mod commands;
mod config;
mod csvio;
mod error;
mod manifest;

pub use args::Cli;
pub use config::{RunConfig, SCHEMA_VERSIONS};
pub use error::CliError;

use args::Command;

/// Executes one parsed invocation and returns the JSON line for stdout.
/// `argv` is recorded verbatim in the manifest.
pub fn run(cli: Cli, argv: &[String]) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(a, argv),
        Command::Train(a) => commands::train(a, argv),
        Command::Eval(a) => commands::eval(a, argv),
        Command::Grid(a) => commands::grid(a, argv),
        Command::Compare(a) => commands::compare(a, argv),
        Command::Attribute(a) => commands::attribute(a, argv),
    }
}
