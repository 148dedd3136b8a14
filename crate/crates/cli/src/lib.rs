//! Command-line pipelines for multilink: configuration, reports and region
//! export.

pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod svg;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
