//! Batch pipeline around `pepsim-core`: run-configuration parsing, the
//! simulate/analyze/project/compare workflows, text artifacts and reports.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use pipeline::{
    run_analyze, run_compare, run_project, run_simulate, PipelineError, SimulateArtifacts,
};
