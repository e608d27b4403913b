//! Batch runner for the bismut-core verification suites: JSON configs in,
//! CSV and JSON-lines reports out.

pub mod config;
pub mod error;
pub mod report;
pub mod suites;

pub use config::{list_suites, ExperimentConfig, Resolved, SuiteName, Tolerances};
pub use error::CliError;
pub use report::{Check, CheckRow, RunOutput};
pub use suites::{run, run_suite};
