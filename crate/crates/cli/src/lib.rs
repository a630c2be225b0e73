//! Command-line orchestration of the reflectance capture pipeline: config
//! parsing, artifact formats and the stage drivers behind `rgbdm`.

pub mod config;
pub mod error;
pub mod formats;
pub mod stages;

pub use config::PipelineConfig;
pub use error::CliError;
