//! The fixed-step simulation loop.

use std::fmt;

use gridsync_core::dft::whole_period_len;
use gridsync_core::inverter::{spectrum, Drive, InverterChain};
use gridsync_core::pll::{measure_phase_error, PhaseLockedLoop};
use gridsync_core::signals::SignalSource;
use gridsync_core::zcd::{FrequencyEstimate, ZeroCrossingDetector};
use gridsync_core::TimeBase;

use crate::metrics::{settling_time, Metrics, SpectraPair, ZCD_TOLERANCE_HZ};
use crate::scenario::{Channel, Scenario, ScenarioError};
use crate::traces::Traces;

/// Length of the trailing window for steady-state metrics.
pub const STEADY_WINDOW_S: f64 = 0.2;

#[derive(Debug)]
pub enum RunErrorKind {
    Invalid(ScenarioError),
    /// No frequency estimate by the ZCD deadline.
    NoCrossing { deadline_s: f64 },
    /// The PLL frequency command stayed at a clamp for too long.
    Diverged { clamped_for_s: f64 },
    Module(gridsync_core::Error),
}

/// A failed run, with the simulated time at which it stopped.
#[derive(Debug)]
pub struct RunError {
    pub time_s: f64,
    pub kind: RunErrorKind,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RunErrorKind::Invalid(e) => {
                write!(f, "{e}")?;
                let mut source = std::error::Error::source(e);
                while let Some(inner) = source {
                    write!(f, ": {inner}")?;
                    source = inner.source();
                }
                Ok(())
            }
            RunErrorKind::NoCrossing { deadline_s } => write!(
                f,
                "at t={}s: no zero crossing validated within the {deadline_s}s deadline",
                self.time_s
            ),
            RunErrorKind::Diverged { clamped_for_s } => write!(
                f,
                "at t={}s: pll diverged (frequency command clamped for {clamped_for_s}s)",
                self.time_s
            ),
            RunErrorKind::Module(e) => write!(f, "at t={}s: {e}", self.time_s),
        }
    }
}

/// The message already carries the underlying error chain.
impl std::error::Error for RunError {}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> Self {
        Self {
            time_s: 0.0,
            kind: RunErrorKind::Invalid(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub traces: Traces,
    /// Every emitted ZCD estimate, in order.
    pub estimates: Vec<FrequencyEstimate>,
}

fn at(time_s: f64) -> impl Fn(gridsync_core::Error) -> RunError {
    move |e| RunError {
        time_s,
        kind: match e {
            gridsync_core::Error::Diverged { clamped_for_s } => {
                RunErrorKind::Diverged { clamped_for_s }
            }
            other => RunErrorKind::Module(other),
        },
    }
}

/// Per-sample values that metrics need regardless of what is recorded.
#[derive(Default)]
struct Internal {
    reference: Vec<f64>,
    generated: Vec<f64>,
    pv: Vec<f64>,
    inverter: Vec<f64>,
    square: Vec<f64>,
    first_pll_index: Option<usize>,
    lock_time_s: Option<f64>,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, RunError> {
    scenario.validate()?;
    let tb = scenario.time_base()?;
    let n = scenario.sample_count();

    let spec = scenario.reference_spec();
    let mut source = SignalSource::new(&spec, tb, &scenario.events).map_err(at(0.0))?;
    let mut zcd = ZeroCrossingDetector::new(scenario.zcd.band, tb);
    if let Some(alpha) = scenario.zcd.smoothing {
        zcd = zcd.with_smoothing(alpha).map_err(at(0.0))?;
    }
    let mut pll = match scenario.pll {
        Some(cfg) => Some(PhaseLockedLoop::new(cfg, tb).map_err(at(0.0))?),
        None => None,
    };
    let mut chains = match &scenario.inverter {
        Some(inv) => Some((
            InverterChain::new(Drive::Spwm(inv.spwm), inv.filter_cutoff_hz, tb).map_err(at(0.0))?,
            InverterChain::new(
                Drive::Square {
                    dc_bus_volts: inv.spwm.dc_bus_volts,
                },
                inv.filter_cutoff_hz,
                tb,
            )
            .map_err(at(0.0))?,
        )),
        None => None,
    };
    let feedback_scale = scenario
        .inverter
        .map_or(1.0, |i| i.spwm.modulation_index * i.spwm.dc_bus_volts);

    let mut traces = Traces::new(scenario.record.iter().map(|c| c.name().to_string()).collect());
    let mut internal = Internal::default();
    let mut estimates = Vec::new();
    let mut feedback = 0.0;
    let mut row = vec![0.0; scenario.record.len()];

    for k in 0..n {
        let t = tb.time_of(k);
        let v_ref = source.next_sample();
        let err = at(t);
        let estimate = zcd.step(v_ref).map_err(&err)?;
        if let Some(e) = estimate {
            estimates.push(e);
            if let Some(pll) = pll.as_mut() {
                if pll.is_ready() {
                    pll.set_reference_frequency(e.hz).map_err(&err)?;
                } else {
                    pll.start(&e).map_err(&err)?;
                }
            }
        }
        if estimates.is_empty() && t >= scenario.zcd.deadline_s {
            return Err(RunError {
                time_s: t,
                kind: RunErrorKind::NoCrossing {
                    deadline_s: scenario.zcd.deadline_s,
                },
            });
        }

        let mut generated = 0.0;
        let mut switching = 0.0;
        let mut inverter_out = 0.0;
        let mut square_out = 0.0;
        match (pll.as_mut(), chains.as_mut()) {
            (Some(pll), None) if pll.is_ready() => {
                generated = pll.step(v_ref).map_err(&err)?;
            }
            (Some(pll), Some((spwm, square))) => {
                if pll.is_ready() {
                    let command = pll.step_with_feedback(v_ref, feedback).map_err(&err)?;
                    let s = spwm.step(command).map_err(&err)?;
                    switching = s.switching;
                    inverter_out = s.output;
                    feedback = s.output / feedback_scale;
                    generated = feedback;
                }
                square_out = square.step(v_ref).map_err(&err)?.output;
            }
            (None, Some((spwm, square))) => {
                let s = spwm.step(v_ref).map_err(&err)?;
                switching = s.switching;
                inverter_out = s.output;
                square_out = square.step(v_ref).map_err(&err)?.output;
            }
            _ => {}
        }
        let started = pll.as_ref().is_some_and(|p| p.is_ready());
        let telemetry = pll.as_ref().map(|p| p.telemetry()).unwrap_or_default();
        if started {
            internal.first_pll_index.get_or_insert(k as usize);
            if telemetry.locked && internal.lock_time_s.is_none() {
                internal.lock_time_s = Some(t);
            }
        }
        internal.reference.push(v_ref);
        internal.generated.push(generated);
        internal.pv.push(telemetry.process_variable);
        if chains.is_some() {
            internal.inverter.push(inverter_out);
            internal.square.push(square_out);
        }

        for (slot, ch) in row.iter_mut().zip(&scenario.record) {
            *slot = match ch {
                Channel::Reference => v_ref,
                Channel::Generated => generated,
                Channel::Pv => telemetry.process_variable,
                Channel::Control => telemetry.control,
                Channel::FrequencyCommand => telemetry.frequency_command_hz,
                Channel::NcoPhase => telemetry.nco_phase,
                Channel::Locked => f64::from(u8::from(telemetry.locked)),
                Channel::ZcdHz => zcd.estimate_hz().unwrap_or(0.0),
                Channel::Switching => switching,
                Channel::Inverter => inverter_out,
                Channel::Square => square_out,
            };
        }
        traces.time_s.push(t);
        for (col, v) in traces.columns.iter_mut().zip(&row) {
            col.push(*v);
        }
    }

    let end = tb.time_of(n);
    let reference_hz = source.frequency_hz();
    let metrics = compute_metrics(scenario, &tb, reference_hz, &estimates, &internal)
        .map_err(at(end))?;
    Ok(RunOutput {
        metrics,
        traces,
        estimates,
    })
}

fn compute_metrics(
    scenario: &Scenario,
    tb: &TimeBase,
    reference_hz: f64,
    estimates: &[FrequencyEstimate],
    internal: &Internal,
) -> Result<Metrics, gridsync_core::Error> {
    let by_crossing: Vec<_> = estimates.iter().map(|e| (e.crossing_time_s, e.hz)).collect();
    let by_emission: Vec<_> = estimates.iter().map(|e| (e.emitted_at_s, e.hz)).collect();
    let settle = |trace: &[(f64, f64)]| {
        settling_time(trace, reference_hz, ZCD_TOLERANCE_HZ)
            .ok()
            .flatten()
    };
    let mut metrics = Metrics {
        zcd_settling_s: settle(&by_crossing),
        zcd_settling_emitted_s: settle(&by_emission),
        zcd_final_error_hz: estimates
            .last()
            .map_or(f64::INFINITY, |e| (e.hz - reference_hz).abs()),
        zcd_estimates: estimates.len(),
        reference_hz,
        lock_time_s: internal.lock_time_s,
        ..Metrics::default()
    };

    if let Some(first) = internal.first_pll_index {
        let total = internal.reference.len();
        let wanted = ((STEADY_WINDOW_S * tb.sample_rate_hz()).round() as usize)
            .max((2.0 * tb.sample_rate_hz() / reference_hz).ceil() as usize);
        if total - first >= wanted {
            let start = total - wanted;
            let len = whole_period_len(wanted, tb, reference_hz).unwrap_or(wanted);
            let window = start..start + len;
            metrics.steady_phase_error_deg = Some(measure_phase_error(
                &internal.reference[window.clone()],
                &internal.generated[window.clone()],
                reference_hz,
                tb,
            )?);
            let pv = &internal.pv[window];
            metrics.pv_steady = Some(pv.iter().sum::<f64>() / pv.len() as f64);
        }
    }

    if let Some(inv) = &scenario.inverter {
        let start = tb.index_at_or_after(inv.analysis_start_s) as usize;
        let start = start.max(internal.first_pll_index.unwrap_or(0));
        if start < internal.inverter.len() {
            metrics.spectra = Some(SpectraPair {
                spwm: spectrum(&internal.inverter[start..], tb, reference_hz, inv.max_order)?,
                square: spectrum(&internal.square[start..], tb, reference_hz, inv.max_order)?,
            });
        }
    }
    Ok(metrics)
}

/// Runs the scenario's inverter open loop, driven by the reference, and
/// returns the SPWM and square-wave output spectra.
pub fn compare_spectra(scenario: &Scenario) -> Result<(RunOutput, SpectraPair), RunError> {
    let mut open = scenario.clone();
    open.pll = None;
    if open.inverter.is_none() {
        return Err(ScenarioError::Invalid(
            "spectrum comparison needs an [inverter] section".to_string(),
        )
        .into());
    }
    open.record.retain(|c| {
        !matches!(
            c,
            Channel::Generated
                | Channel::Pv
                | Channel::Control
                | Channel::FrequencyCommand
                | Channel::NcoPhase
                | Channel::Locked
        )
    });
    for ch in [Channel::Reference, Channel::Inverter, Channel::Square] {
        if !open.record.contains(&ch) {
            open.record.push(ch);
        }
    }
    let out = run_scenario(&open)?;
    let spectra = out.metrics.spectra.clone().ok_or_else(|| RunError {
        time_s: open.duration_s,
        kind: RunErrorKind::Invalid(ScenarioError::Invalid(
            "inverter.analysis_start_s leaves no samples to analyse".to_string(),
        )),
    })?;
    Ok((out, spectra))
}
