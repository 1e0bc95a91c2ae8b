//! Experiment runner for the DFL moving-target-defense simulator: config
//! files, IDX dataset loading, CSV/JSON reports and sweeps.

pub mod config_file;
pub mod idx;
pub mod report;
pub mod runner;

pub use config_file::{load_config, parse_config_str, ConfigError, LoadedConfig};
pub use runner::{run_to_dir, sweep, RunOutput, Strategy, SweepGrid, SweepRow};
