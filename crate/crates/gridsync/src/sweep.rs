//! Frequency sweeps of a template scenario.

use std::path::Path;

use rayon::prelude::*;

use crate::metrics::Metrics;
use crate::run::run_scenario;
use crate::scenario::{Scenario, ScenarioError};
use crate::OutputError;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub frequency_hz: f64,
    /// Metrics, or the failure message of this row.
    pub outcome: Result<Metrics, String>,
}

/// Grid `f_start + i·step` for every `i` that stays at or below `f_end`.
pub fn sweep_frequencies(f_start: f64, f_end: f64, step: f64) -> Vec<f64> {
    // tolerate rounding in (f_end - f_start) / step
    let count = ((f_end - f_start) / step * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
    (0..count).map(|i| f_start + i as f64 * step).collect()
}

/// Runs `template` at each grid frequency, rows in parallel. A failing row
/// is recorded and the sweep continues.
pub fn sweep(
    f_start: f64,
    f_end: f64,
    step: f64,
    template: &Scenario,
) -> Result<Vec<SweepRow>, ScenarioError> {
    let tb = template.time_base()?;
    if !(f_start > 0.0 && f_start < f_end && f_end < tb.nyquist_hz() / 2.0) {
        return Err(ScenarioError::Invalid(format!(
            "sweep needs 0 < from < to < nyquist/2 ({} Hz), got {f_start} → {f_end}",
            tb.nyquist_hz() / 2.0
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(ScenarioError::Invalid("sweep step must be > 0".to_string()));
    }
    Ok(sweep_frequencies(f_start, f_end, step)
        .into_par_iter()
        .map(|f| {
            let mut s = template.clone();
            s.reference.frequency_hz = f;
            SweepRow {
                frequency_hz: f,
                outcome: run_scenario(&s)
                    .map(|out| out.metrics)
                    .map_err(|e| e.to_string()),
            }
        })
        .collect())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "frequency_hz",
        "status",
        "zcd_final_error_hz",
        "zcd_settling_s",
        "lock_time_s",
        "steady_phase_error_deg",
        "pv_steady",
        "error",
    ])?;
    for row in rows {
        let f = row.frequency_hz.to_string();
        match &row.outcome {
            Ok(m) => w.write_record([
                f,
                "ok".to_string(),
                m.zcd_final_error_hz.to_string(),
                cell(m.zcd_settling_s),
                cell(m.lock_time_s),
                cell(m.steady_phase_error_deg),
                cell(m.pv_steady),
                String::new(),
            ])?,
            Err(msg) => w.write_record([
                f,
                "failed".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                msg.clone(),
            ])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), OutputError> {
    let file = std::fs::File::create(path).map_err(|e| OutputError::new(path, e))?;
    write_sweep_csv(rows, std::io::BufWriter::new(file)).map_err(|e| OutputError::new(path, e))
}
