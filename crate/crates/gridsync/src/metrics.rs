//! Run metrics and the settling-time measure.

use std::fmt::Write as _;
use std::path::Path;

use gridsync_core::inverter::SpectrumResult;

use crate::OutputError;

/// Harmonic content of the inverter output and of a square-wave drive
/// through the same output filter.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraPair {
    pub spwm: SpectrumResult,
    pub square: SpectrumResult,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    /// Start of the final in-tolerance (±0.01 Hz) run of ZCD estimates,
    /// on the crossing instants that close each measured period.
    pub zcd_settling_s: Option<f64>,
    /// Same, on the instants the estimates were emitted.
    pub zcd_settling_emitted_s: Option<f64>,
    pub zcd_final_error_hz: f64,
    pub zcd_estimates: usize,
    /// Reference frequency at the end of the run.
    pub reference_hz: f64,
    /// First time the lock detector reported lock.
    pub lock_time_s: Option<f64>,
    /// Generated-vs-reference phase over the trailing window, degrees.
    pub steady_phase_error_deg: Option<f64>,
    /// Mean loop-filter output over the trailing window.
    pub pv_steady: Option<f64>,
    pub spectra: Option<SpectraPair>,
}

/// Tolerance used for ZCD settling.
pub const ZCD_TOLERANCE_HZ: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SettlingError {
    #[error("settling time of an empty trace")]
    Empty,
    #[error("trace times must be strictly increasing")]
    NotIncreasing,
}

/// Earliest time `T` such that every sample at or after `T` is within `tol`
/// of `target`. `Ok(None)` when the last sample is outside the band. A trace
/// that is in band throughout settles at its first sample time.
pub fn settling_time(
    trace: &[(f64, f64)],
    target: f64,
    tol: f64,
) -> Result<Option<f64>, SettlingError> {
    if trace.is_empty() {
        return Err(SettlingError::Empty);
    }
    if trace.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(SettlingError::NotIncreasing);
    }
    let mut settled = None;
    for &(t, v) in trace.iter().rev() {
        if (v - target).abs() <= tol {
            settled = Some(t);
        } else {
            break;
        }
    }
    Ok(settled)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl Metrics {
    /// Flat `key=value` text, one metric per line.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("reference_hz", self.reference_hz.to_string());
        kv("zcd_estimates", self.zcd_estimates.to_string());
        kv("zcd_settling_s", opt(self.zcd_settling_s));
        kv("zcd_settling_emitted_s", opt(self.zcd_settling_emitted_s));
        kv("zcd_final_error_hz", self.zcd_final_error_hz.to_string());
        kv("lock_time_s", opt(self.lock_time_s));
        kv("steady_phase_error_deg", opt(self.steady_phase_error_deg));
        kv("pv_steady", opt(self.pv_steady));
        if let Some(sp) = &self.spectra {
            for (prefix, s) in [("spwm", &sp.spwm), ("square", &sp.square)] {
                kv(&format!("{prefix}_fundamental"), s.magnitude(1).to_string());
                for k in [3, 5, 7] {
                    if k <= s.magnitudes.len() {
                        kv(&format!("{prefix}_h{k}_relative"), s.relative(k).to_string());
                    }
                }
                kv(&format!("{prefix}_thd"), s.thd.to_string());
            }
        }
        out
    }
}

pub fn emit_report(metrics: &Metrics, path: &Path) -> Result<(), OutputError> {
    std::fs::write(path, metrics.to_report()).map_err(|e| OutputError::new(path, e))
}
