//! End-to-end experiments: configuration, synthetic data, grid runs,
//! transfer tests and report rendering.

mod config;
pub mod report;
mod run;
pub mod synth;

pub use config::{DatasetEntry, DatasetRole, ExperimentConfig};
pub use run::{
    read_results, run_experiment, DatasetResult, ReportRow, RunResults, RunSummary, Selection,
    TransferRow, P_VALUE_NOTE,
};
