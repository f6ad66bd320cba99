//! Experiment harness for `mnpo-core`: TOML experiment configs, deterministic runs that write
//! CSV metrics and a plain-text summary, and the preset-versus-direct-formula comparison.

pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;

pub use config::{ExperimentConfig, Mode};
pub use error::{HarnessError, HarnessResult};
pub use experiment::{run_config, run_experiment, RunOutput, Summary};
pub use presets::{compare_presets, PresetDeviation};
