//! Experiment configuration, figure presets and output files.

mod config;
mod presets;
mod run;

use thiserror::Error;

pub use config::{
    parse_config, resolve, ConfigFile, ExperimentSection, ExperimentSpec, Metric, Mode, OneOrMany, OutputSection,
    OutputSpec, PolicySection, ScheduleSection, SystemSection, SystemSpec, DEFAULT_MU, DEFAULT_OUTPUT_DIR,
    DEFAULT_SAMPLE_DT,
};
pub use presets::{preset, time_varying_segments, PRESET_NAMES, TIME_VARYING_JUMPS};
pub use run::{
    fluid_initial, print_manifest, run_experiment, sim_config, Manifest, MANIFEST_FILE, RESOLVED_SPEC_FILE,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Sim(#[from] crate::des::SimError),
    #[error(transparent)]
    Fluid(#[from] crate::fluid::FluidError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    pub fn config(key: impl Into<String>, message: String) -> Self {
        Self::Config { key: key.into(), message }
    }

    pub fn missing(key: impl Into<String>) -> Self {
        Self::Config { key: key.into(), message: "required key is missing".into() }
    }

    pub fn is_config_error(&self) -> bool {
        matches!(self, Self::Parse(_) | Self::Config { .. })
    }

    /// Process exit status: 2 for config errors, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_config_error() {
            2
        } else {
            3
        }
    }
}
