//! Command-line driver for hyper-parameter sensitivity of rare-event
//! probabilities: configuration, the double loop over hyper-parameter
//! samples, artifact files and grid I/O. The numerics live in
//! [`raresens_core`].

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod driver;
pub mod error;
pub mod grid_io;
pub mod model;

pub use config::{Estimator, ExperimentConfig, ModelKind, Overrides};
pub use error::{AppError, AppResult};
