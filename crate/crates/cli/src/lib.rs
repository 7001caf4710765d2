//! Config-driven experiment runner: synthetic data generation, ATE
//! estimation with posterior diagnostics, calibration studies, the
//! prior-bias harness and external-PPD protocol checks.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod stub;

pub use commands::{CommandError, CommandOutcome};
pub use config::{ConfigError, DatasetConfig, Estimator, NuisanceSource, RunConfig};
pub use pipeline::{PipelineError, ReplicateOutput, Task};
