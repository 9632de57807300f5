//! The `disclosure` command-line pipeline: file formats in, effect
//! estimates, plots and a reproducibility manifest out.

pub mod app;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod simulate;
pub mod stages;

pub use config::PipelineConfig;
pub use error::{CliError, ErrorKind, Result};
