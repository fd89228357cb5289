//! Batch front end for the auxbound analysis pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{reproduce, run, Command};
pub use config::RunConfig;
pub use error::{CliError, Result};
