//! Benchmark front end: configuration, preparation, evaluation runs and
//! reports with reproducibility manifests.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run_bench, Manifest};
pub use config::{Overrides, RunConfig, Scheme};
pub use error::{CliError, CliResult};
