//! Experiment harness around the dpglm crate: JSON configs in, CSV out.

pub mod config;
pub mod error;
pub mod mnist;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind, Knob};
pub use error::{CliError, Result};
pub use report::{ResultRow, CSV_HEADER};
