//! Command implementations behind the `locequate` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use commands::{cmd_diagnose, cmd_equate, cmd_simulate, EquateMethod, EquateOptions, SimulateOptions};
pub use config::{parse_config, Scenario};
pub use dataset::{parse_dataset, read_dataset, write_dataset, Dataset, DatasetSchema};
pub use error::{CliError, Result};
