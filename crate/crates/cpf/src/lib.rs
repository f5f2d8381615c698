//! Experiment harness for coupled particle filters.
//!
//! Each experiment kind reads its parameters from an INI section, runs
//! replicates on a thread pool with per-replicate random streams, and
//! writes per-replicate CSV tables, their percentile aggregates and a
//! JSON manifest.

pub mod config;
pub mod data;
mod error;
mod experiments;
pub mod models;
pub mod run;
pub mod seeds;
pub mod table;

pub use config::{ExperimentConfig, Kind, Overrides};
pub use error::{Error, Result};
pub use run::{aggregate_file, run_experiment, Manifest};
