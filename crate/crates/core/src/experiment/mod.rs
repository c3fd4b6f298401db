//! Experiment configuration, orchestration and reports.

pub mod config;
pub mod report;
mod run;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, ScenarioSpec};
pub use report::{parse_csv, render, CsvRecord, ReportFormat, ReportRow, ScenarioResult};
pub use run::{
    derive_seed, load_embedding_file, load_tables, run_experiment, scenario_dir, ExperimentError, ExperimentReport,
    Provenance, RunOptions,
};
