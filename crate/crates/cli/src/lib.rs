//! Command surface, run configuration and checkpoint format for the
//! `vd2nn` tool.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;

pub use error::{CliError, Result};
