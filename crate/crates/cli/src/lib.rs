//! Command-line driver for the Sonnet forecaster: experiment configuration,
//! synthetic data and the train / evaluate / forecast / grid-search / ablate
//! commands.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod synth;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
