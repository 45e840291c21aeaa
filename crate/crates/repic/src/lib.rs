//! Command-line front end: configuration, event ingestion, subcommands and output files.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::run;
pub use config::{Cli, Command, Opts};
pub use error::{CliError, Result};
