//! Command-line driver for the spinmid integrators: strict JSON configs in,
//! bit-stable CSV and JSON files out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Command, Outcome};
pub use config::ExperimentConfig;
pub use error::CliError;
