//! File formats, scenario files and the command line for `er-sentinel-core`.

pub mod cli;
pub mod commands;
pub mod error;
pub mod formats;
pub mod scenario;

pub use error::CliError;
pub use scenario::Scenario;
