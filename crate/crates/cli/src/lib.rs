//! Batch front end for the pattern-entropy library: configuration, report
//! writers, subcommand drivers and the verification suites.

pub mod config;
mod error;
pub mod report;
pub mod run;
pub mod verify;

pub use error::{CliError, CliResult};
