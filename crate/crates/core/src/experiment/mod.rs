//! Batch Monte Carlo experiments: configuration, drivers and reports.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{parse_override, BlockChoice, ExperimentConfig, Generator, ModelKind, OutputFormat, ProcessConfig};
pub use report::{emit_report, read_report_json, summarize, ExperimentKind, ExperimentReport, ReplicateRecord, SummaryRow};
pub use runner::{read_fixture, run_coverage_experiment, run_isotropy_experiment, run_oracle, write_fixture, OracleFixture};
