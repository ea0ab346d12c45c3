//! File formats, configuration, parallel execution and the command implementations
//! behind the `bmsi` binary.

pub mod commands;
pub mod config;
mod error;
pub mod exec;
pub mod formats;

pub use error::CliError;
