//! Experiment harness: configuration, the canonical benchmark, seeded runs and CSV output.

pub mod benchmark;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::{resolve_output_dir, run_experiment, RunArtifacts};
