//! Config-driven experiment runner for the `geoflow` laboratory.
//!
//! A run reads an [`ExperimentConfig`] (TOML), executes each experiment pipeline over its
//! parameter grid and writes [`ResultTable`]s as CSV, JSON or two-column plot data.

pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod pipelines;
pub mod table;

pub use cache::TrajectoryCache;
pub use config::{ExperimentConfig, Format};
pub use error::CliError;
pub use pipelines::{run_experiment, RunOutcome};
pub use table::{emit_report, ResultTable};
