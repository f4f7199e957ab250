//! Library side of the `permanence` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod sweep;

pub use commands::{Format, Global};
pub use error::CliError;
