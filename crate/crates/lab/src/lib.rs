//! Experiment runner for `nvi-core`: JSON configuration, run and sweep
//! drivers, ledger and diagnostics files, and SVG reports.

pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod runner;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::LabError;
