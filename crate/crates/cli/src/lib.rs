//! Experiment orchestration for the bath-driven granular gas: configuration, scenarios,
//! acceptance checks and report emission.

pub mod checks;
pub mod config;
pub mod error;
pub mod report;
pub mod scenarios;
pub mod stats;

pub use checks::Check;
pub use config::{CheckSettings, ExperimentConfig, Overrides, Scenario};
pub use error::{CliError, Result};
pub use report::ExperimentReport;
pub use scenarios::{run, RunOptions};
