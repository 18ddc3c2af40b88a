//! Command-line driver: presets, experiment files, output files.

pub mod config;
pub mod error;
pub mod presets;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_config_str};
pub use error::{CliError, Result};
pub use report::{write_report, RunManifest};
pub use run::{run_experiment, RunFlags, RunOutcome};
