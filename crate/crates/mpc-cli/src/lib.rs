//! Command-line companion to `mpc-core`: presets, config files, training
//! runs, sweeps, regret experiments, and run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod presets;
pub mod setup;

pub use config::Config;
pub use error::{CliError, Result};
