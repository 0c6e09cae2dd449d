//! Scenario harness for the `gridsync-core` simulator: scenario files,
//! the fixed-step run loop, metrics, trace files and frequency sweeps.
// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod metrics;
pub mod run;
pub mod scenario;
pub mod sweep;
pub mod traces;

pub use metrics::{emit_report, settling_time, Metrics, SpectraPair};
pub use run::{compare_spectra, run_scenario, RunError, RunErrorKind, RunOutput};
pub use scenario::{Channel, InverterOptions, Scenario, ScenarioError, ZcdOptions};
pub use sweep::{emit_sweep_csv, sweep, sweep_frequencies, SweepRow};
pub use traces::{emit_csv, Traces};

/// Error writing an output file.
#[derive(Debug, thiserror::Error)]
#[error("cannot write {}", path.display())]
pub struct OutputError {
    pub path: std::path::PathBuf,
    #[source]
    pub source: std::io::Error,
}

impl OutputError {
    pub(crate) fn new(path: &std::path::Path, source: impl Into<std::io::Error>) -> Self {
        Self {
            path: path.to_path_buf(),
            source: source.into(),
        }
    }
}
