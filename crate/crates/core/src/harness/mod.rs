//! Experiment orchestration: configuration, the Monte-Carlo pipeline and
//! report files.

pub mod config;
pub mod experiment;
pub mod report;
pub mod svg;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentReport, MethodSummary, Stat};
pub use report::emit_report;
