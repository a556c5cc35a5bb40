//! Experiment harness for `loco-core`: JSON configs, parallel seeds, CSV
//! traces and aggregates, manifests, checkpoints, latent dumps and sweeps.

pub mod config;
pub mod experiment;
pub mod io;

pub use config::{ConfigError, ExperimentConfig};
