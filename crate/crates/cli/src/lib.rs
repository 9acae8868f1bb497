//! Command-line driver for `dre-core`: JSON configs in, CSV and JSON artifacts out.

pub mod artifacts;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;

use clap::Parser;
use serde_json::Value;

pub use commands::{Cli, Command};
pub use config::RunConfig;
pub use error::CliError;

/// Outcome of parsing the argument list.
pub enum Invocation {
    Run(Command),
    /// `--help` or `--version`: text for stdout.
    Info(String),
}

pub fn parse<I, T>(args: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => Ok(Invocation::Run(cli.command)),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp
            | clap::error::ErrorKind::DisplayVersion
            | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => Ok(Invocation::Info(e.to_string())),
            _ => Err(CliError::Config(e.to_string().trim_end().to_string())),
        },
    }
}

/// Parses and runs one command, returning its JSON summary.
pub fn run<I, T>(args: I) -> Result<Option<Value>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse(args)? {
        Invocation::Info(text) => {
            print!("{text}");
            Ok(None)
        }
        Invocation::Run(cmd) => commands::execute(&cmd).map(Some),
    }
}
