//! Experiment orchestration, file formats and the command-line interface.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod model_file;
pub mod selftest;
pub mod snapshot;

pub use error::{HarnessError, Result};
