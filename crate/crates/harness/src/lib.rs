//! Benchmarks for dataset dictionary learning: synthetic shifted domains,
//! feature-file ingestion, the multi-source adaptation experiment runner,
//! the simplex interpolation study and CSV/SVG reporting.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod report;
pub mod study;

pub use config::{ExperimentConfig, Method};
pub use error::{HarnessError, Result};
