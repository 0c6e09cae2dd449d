//! Product-detector phase-locked loop.
//!
//! Per step: the generated voltage (NCO output after the phase-shift block)
//! is multiplied with the reference, the product is low-pass filtered to its
//! DC term `cos(θ)/2`, a PID drives that process variable toward 0.5, and
//! the PID output is added to the ZCD frequency estimate to form the NCO
//! frequency command.
//!
//! The error `0.5 - cos(θ)/2` is never negative, so with a positive
//! proportional gain the NCO only ever runs at or above the ZCD frequency:
//! the output phase advances until it reaches the reference phase, where the
//! error and the correction vanish together. Any integral gain accumulates
//! that one-signed error and turns into a standing frequency offset, so the
//! shipped tuning is proportional only.

use core::f64::consts::TAU;

use crate::dft::project;
use crate::dsp::{LowPassFilter, Nco, PidController, PidGains};
use crate::signals::TimeBase;
use crate::zcd::FrequencyEstimate;
use crate::{ensure_finite, Error, Result};

/// Process-variable setpoint of the product detector: `cos(0)/2`.
pub const PRODUCT_SETPOINT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    /// `v_ref · v_out`; DC term `cos(θ)/2`.
    Product,
    /// `v_ref · v_out` with `v_out` taken 90° behind the generated wave;
    /// DC term `sin(θ)/2`. Signed, for comparison runs only.
    Quadrature,
}

impl DetectorMode {
    pub fn setpoint(self) -> f64 {
        match self {
            DetectorMode::Product => PRODUCT_SETPOINT,
            DetectorMode::Quadrature => 0.0,
        }
    }
}

/// Multiplying phase detector.
///
/// In [`DetectorMode::Quadrature`] the caller passes the quadrature copy of
/// the generated wave (`-cos` of its phase) as `v_out`; the arithmetic is the
/// same product.
pub fn phase_detector(v_ref: f64, v_out: f64, _mode: DetectorMode) -> Result<f64> {
    Ok(ensure_finite(v_ref)? * ensure_finite(v_out)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoopFilterConfig {
    FirstOrder { cutoff_hz: f64 },
    SecondOrder { cutoff_hz: f64 },
    /// Moving average over `periods` periods of the ZCD frequency estimate.
    PeriodAverage { periods: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllConfig {
    pub loop_filter: LoopFilterConfig,
    pub gains: PidGains,
    /// Symmetric PID output limit, Hz.
    pub output_limit_hz: f64,
    pub anti_windup: bool,
    /// Lag of the output chain between the NCO and the fed-back voltage.
    pub phase_shift_rad: f64,
    pub detector_mode: DetectorMode,
    /// Half-width of the lock band around the setpoint.
    pub lock_band: f64,
    pub lock_dwell_s: f64,
    /// NCO phase when the loop starts.
    pub initial_phase_rad: f64,
    pub min_frequency_hz: f64,
    pub max_frequency_hz: f64,
    /// Longest continuous frequency-command clamp before the loop is
    /// declared divergent.
    pub divergence_timeout_s: f64,
}

impl Default for PllConfig {
    fn default() -> Self {
        Self {
            loop_filter: LoopFilterConfig::PeriodAverage { periods: 1.0 },
            gains: PidGains {
                kp: 15.0,
                ki: 0.0,
                kd: 0.0,
            },
            output_limit_hz: 40.0,
            anti_windup: true,
            phase_shift_rad: 0.0,
            detector_mode: DetectorMode::Product,
            lock_band: 0.002,
            lock_dwell_s: 0.1,
            initial_phase_rad: 0.0,
            min_frequency_hz: 20.0,
            max_frequency_hz: 80.0,
            divergence_timeout_s: 1.0,
        }
    }
}

impl PllConfig {
    pub fn setpoint(&self) -> f64 {
        self.detector_mode.setpoint()
    }

    pub fn validate(&self, tb: &TimeBase) -> Result<()> {
        if !(self.lock_band > 0.0 && self.lock_band.is_finite()) {
            return Err(Error::InvalidParameter("lock band must be positive"));
        }
        if !(self.lock_dwell_s > 0.0 && self.lock_dwell_s.is_finite()) {
            return Err(Error::InvalidParameter("lock dwell must be positive"));
        }
        if !(self.phase_shift_rad.is_finite() && (0.0..TAU).contains(&self.phase_shift_rad)) {
            return Err(Error::InvalidParameter("phase shift must lie in [0, 2π)"));
        }
        if !self.initial_phase_rad.is_finite() {
            return Err(Error::InvalidParameter("initial phase must be finite"));
        }
        if !(self.output_limit_hz > 0.0 && self.output_limit_hz.is_finite()) {
            return Err(Error::InvalidParameter("PID output limit must be positive"));
        }
        if !(0.0 < self.min_frequency_hz && self.min_frequency_hz < self.max_frequency_hz) {
            return Err(Error::InvalidParameter(
                "frequency clamp needs 0 < min < max",
            ));
        }
        tb.check_below_nyquist(self.max_frequency_hz)?;
        if !(self.divergence_timeout_s > 0.0 && self.divergence_timeout_s.is_finite()) {
            return Err(Error::InvalidParameter("divergence timeout must be positive"));
        }
        match self.loop_filter {
            LoopFilterConfig::FirstOrder { cutoff_hz } | LoopFilterConfig::SecondOrder { cutoff_hz } => {
                if !(cutoff_hz > 0.0) {
                    return Err(Error::InvalidParameter("loop filter cutoff must be positive"));
                }
                tb.check_below_nyquist(cutoff_hz)?;
            }
            LoopFilterConfig::PeriodAverage { periods } => {
                if !(periods > 0.0 && periods.is_finite()) {
                    return Err(Error::InvalidParameter("averaging periods must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Loop filter described by this configuration. A period average is sized
    /// for `min_frequency_hz` and starts with the window of
    /// `max_frequency_hz`; the loop retunes it with each ZCD estimate.
    pub fn build_filter(&self, tb: TimeBase) -> Result<LowPassFilter> {
        match self.loop_filter {
            LoopFilterConfig::FirstOrder { cutoff_hz } => LowPassFilter::first_order(cutoff_hz, tb),
            LoopFilterConfig::SecondOrder { cutoff_hz } => LowPassFilter::second_order(cutoff_hz, tb),
            LoopFilterConfig::PeriodAverage { periods } => LowPassFilter::period_average(
                periods / self.max_frequency_hz,
                periods / self.min_frequency_hz,
                tb,
            ),
        }
    }
}

/// Declares lock once the process variable has stayed within
/// `setpoint ± band` for a continuous dwell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockDetector {
    setpoint: f64,
    band: f64,
    dwell_steps: u64,
    in_band_steps: u64,
}

impl LockDetector {
    pub fn new(setpoint: f64, band: f64, dwell_s: f64, tb: &TimeBase) -> Self {
        let dwell_steps = (libm::round(dwell_s * tb.sample_rate_hz()) as u64).max(1);
        Self {
            setpoint,
            band,
            dwell_steps,
            in_band_steps: 0,
        }
    }

    pub fn in_band(&self, pv: f64) -> bool {
        libm::fabs(pv - self.setpoint) <= self.band
    }

    pub fn update(&mut self, pv: f64) -> bool {
        if self.in_band(pv) {
            self.in_band_steps += 1;
        } else {
            self.in_band_steps = 0;
        }
        self.is_locked()
    }

    pub fn reset(&mut self) {
        self.in_band_steps = 0;
    }

    pub fn is_locked(&self) -> bool {
        self.in_band_steps >= self.dwell_steps
    }

    pub fn dwell_steps(&self) -> u64 {
        self.dwell_steps
    }
}

/// Per-step loop telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PllTelemetry {
    /// Fed-back generated voltage used by the detector on this step.
    pub v_out: f64,
    pub detector: f64,
    /// Loop-filter output (the PID process variable).
    pub process_variable: f64,
    /// PID output, Hz.
    pub control: f64,
    pub frequency_command_hz: f64,
    /// NCO phase after the step.
    pub nco_phase: f64,
    pub locked: bool,
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct PhaseLockedLoop {
    config: PllConfig,
    tb: TimeBase,
    nco: Nco,
    filter: LowPassFilter,
    pid: PidController,
    lock: LockDetector,
    zcd_frequency_hz: Option<f64>,
    clamp_steps: u64,
    clamp_limit_steps: u64,
    telemetry: PllTelemetry,
}

impl PhaseLockedLoop {
    pub fn new(config: PllConfig, tb: TimeBase) -> Result<Self> {
        config.validate(&tb)?;
        let pid = PidController::new(
            config.gains,
            config.setpoint(),
            (-config.output_limit_hz, config.output_limit_hz),
            &tb,
        )?
        .with_anti_windup(config.anti_windup);
        Ok(Self {
            nco: Nco::new(config.initial_phase_rad),
            filter: config.build_filter(tb)?,
            pid,
            lock: LockDetector::new(config.setpoint(), config.lock_band, config.lock_dwell_s, &tb),
            zcd_frequency_hz: None,
            clamp_steps: 0,
            clamp_limit_steps: libm::round(config.divergence_timeout_s * tb.sample_rate_hz()) as u64,
            telemetry: PllTelemetry {
                nco_phase: crate::wrap_phase(config.initial_phase_rad),
                ..PllTelemetry::default()
            },
            config,
            tb,
        })
    }

    pub fn config(&self) -> &PllConfig {
        &self.config
    }

    /// Feeds a new ZCD frequency estimate into the loop.
    pub fn set_reference_frequency(&mut self, hz: f64) -> Result<()> {
        if !(hz > 0.0) {
            return Err(Error::InvalidParameter("reference frequency must be positive"));
        }
        self.tb.check_below_nyquist(hz)?;
        if let LoopFilterConfig::PeriodAverage { periods } = self.config.loop_filter {
            let f = hz.clamp(self.config.min_frequency_hz, self.config.max_frequency_hz);
            self.filter.set_window(periods / f)?;
        }
        self.zcd_frequency_hz = Some(hz);
        Ok(())
    }

    /// Starts the loop from a ZCD estimate. `initial_phase_rad` is taken
    /// relative to the reference at the validated crossing, so the NCO is
    /// advanced by the reference phase accrued up to the emitting sample.
    pub fn start(&mut self, estimate: &FrequencyEstimate) -> Result<()> {
        if self.is_ready() {
            return Err(Error::ContractViolation("loop already started"));
        }
        let elapsed = estimate.emitted_at_s - estimate.crossing_time_s;
        if !(elapsed >= 0.0) {
            return Err(Error::ContractViolation("estimate emitted before its crossing"));
        }
        let phase = crate::wrap_phase(
            self.config.initial_phase_rad + TAU * estimate.hz * elapsed,
        );
        self.set_reference_frequency(estimate.hz)?;
        self.nco = Nco::new(phase);
        self.telemetry.nco_phase = phase;
        Ok(())
    }

    pub fn zcd_frequency_hz(&self) -> Option<f64> {
        self.zcd_frequency_hz
    }

    pub fn is_ready(&self) -> bool {
        self.zcd_frequency_hz.is_some()
    }

    pub fn is_locked(&self) -> bool {
        self.lock.is_locked()
    }

    pub fn last_error_signal(&self) -> f64 {
        self.filter.output()
    }

    pub fn nco_phase(&self) -> f64 {
        self.nco.phase()
    }

    pub fn telemetry(&self) -> PllTelemetry {
        self.telemetry
    }

    /// One loop iteration with the output chain modelled by the phase-shift
    /// block. Returns the generated voltage fed back on this step.
    pub fn step(&mut self, v_ref: f64) -> Result<f64> {
        let zcd_hz = self.zcd_frequency_hz.ok_or(Error::NotReady)?;
        let shifted = self.nco.phase() + self.config.phase_shift_rad;
        let v_out = libm::sin(shifted);
        let detector_input = match self.config.detector_mode {
            DetectorMode::Product => v_out,
            DetectorMode::Quadrature => -libm::cos(shifted),
        };
        self.advance(zcd_hz, v_ref, v_out, detector_input)?;
        Ok(v_out)
    }

    /// One loop iteration with an externally simulated output chain: the
    /// detector multiplies `v_ref` with `feedback`. Returns the NCO sample
    /// (the modulating signal for the output chain) before the phase advance.
    pub fn step_with_feedback(&mut self, v_ref: f64, feedback: f64) -> Result<f64> {
        let zcd_hz = self.zcd_frequency_hz.ok_or(Error::NotReady)?;
        if self.config.detector_mode != DetectorMode::Product {
            return Err(Error::InvalidParameter(
                "external feedback needs the product detector",
            ));
        }
        let command = self.nco.sample();
        self.advance(zcd_hz, v_ref, feedback, feedback)?;
        Ok(command)
    }

    fn advance(&mut self, zcd_hz: f64, v_ref: f64, v_out: f64, detector_input: f64) -> Result<()> {
        let detector = phase_detector(v_ref, detector_input, self.config.detector_mode)?;
        let pv = self.filter.step(detector)?;
        let primed = self.filter.is_primed();
        let control = if primed { self.pid.step(pv)? } else { 0.0 };
        let raw = zcd_hz + control;
        let command = raw.clamp(self.config.min_frequency_hz, self.config.max_frequency_hz);
        let clamped = command != raw;
        if clamped {
            self.clamp_steps += 1;
            if self.clamp_steps > self.clamp_limit_steps {
                return Err(Error::Diverged {
                    clamped_for_s: self.clamp_steps as f64 * self.tb.dt(),
                });
            }
        } else {
            self.clamp_steps = 0;
        }
        self.nco.step(command, &self.tb)?;
        let locked = if primed {
            self.lock.update(pv)
        } else {
            self.lock.reset();
            false
        };
        self.telemetry = PllTelemetry {
            v_out,
            detector,
            process_variable: pv,
            control,
            frequency_command_hz: command,
            nco_phase: self.nco.phase(),
            locked,
            clamped,
        };
        Ok(())
    }
}

/// Phase of `out_window` relative to `ref_window` at `frequency_hz`, degrees
/// in `(-180, 180]`. Positive means the output leads.
pub fn measure_phase_error(
    ref_window: &[f64],
    out_window: &[f64],
    frequency_hz: f64,
    tb: &TimeBase,
) -> Result<f64> {
    if ref_window.len() != out_window.len() {
        return Err(Error::ContractViolation("phase windows must have equal length"));
    }
    if !(frequency_hz > 0.0) {
        return Err(Error::InvalidParameter("frequency must be positive"));
    }
    let needed = libm::ceil(2.0 * tb.sample_rate_hz() / frequency_hz) as usize;
    if ref_window.len() < needed {
        return Err(Error::WindowTooShort {
            needed,
            got: ref_window.len(),
        });
    }
    let r = project(ref_window, tb, frequency_hz);
    let o = project(out_window, tb, frequency_hz);
    let mut diff = (o.phase() - r.phase()).to_degrees();
    while diff > 180.0 {
        diff -= 360.0;
    }
    while diff <= -180.0 {
        diff += 360.0;
    }
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use core::f64::consts::PI;

    fn tb() -> TimeBase {
        TimeBase::new(20_000.0).unwrap()
    }

    fn sine(f: f64, phase: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| libm::sin(TAU * f * k as f64 / 20_000.0 + phase))
            .collect()
    }

    fn detector_average(theta: f64) -> f64 {
        // whole number of 50 Hz periods
        let r = sine(50.0, 0.0, 2000);
        let o = sine(50.0, theta, 2000);
        r.iter()
            .zip(&o)
            .map(|(a, b)| phase_detector(*a, *b, DetectorMode::Product).unwrap())
            .sum::<f64>()
            / 2000.0
    }

    #[test]
    fn detector_averages() {
        assert!((detector_average(0.0) - 0.5).abs() < 1e-6);
        assert!((detector_average(PI / 3.0) - 0.25).abs() < 1e-3);
        assert!(detector_average(PI / 2.0).abs() < 1e-3);
        assert_eq!(
            phase_detector(f64::NAN, 1.0, DetectorMode::Product),
            Err(Error::NonFinite)
        );
    }

    #[test]
    fn phase_error_examples() {
        let r = sine(50.0, 0.0, 2000);
        assert!(measure_phase_error(&r, &r, 50.0, &tb()).unwrap().abs() < 1e-9);
        // quarter period delay = 100 samples
        let delayed = sine(50.0, -PI / 2.0, 2000);
        let e = measure_phase_error(&r, &delayed, 50.0, &tb()).unwrap();
        assert!((e + 90.0).abs() < 1e-9);
        let lead = sine(50.0, 0.4, 2000);
        let e = measure_phase_error(&r, &lead, 50.0, &tb()).unwrap();
        assert!((e - 22.918).abs() < 0.1, "{e}");
        let anti = sine(50.0, PI, 2000);
        let e = measure_phase_error(&r, &anti, 50.0, &tb()).unwrap();
        assert!((e - 180.0).abs() < 1e-9);
    }

    #[test]
    fn phase_error_rejects_short_or_mismatched_windows() {
        let r = sine(50.0, 0.0, 799);
        assert!(matches!(
            measure_phase_error(&r, &r, 50.0, &tb()),
            Err(Error::WindowTooShort { needed: 800, got: 799 })
        ));
        assert!(measure_phase_error(&r[..700], &r[..600], 50.0, &tb()).is_err());
    }

    #[test]
    fn lock_detector_dwell() {
        let mut lock = LockDetector::new(0.5, 0.002, 0.1, &tb());
        let dwell = lock.dwell_steps();
        assert_eq!(dwell, 2000);
        for i in 0..2 * dwell {
            let locked = lock.update(0.5);
            assert_eq!(locked, i + 1 >= dwell);
        }
        assert!(lock.is_locked());
        let mut lock = LockDetector::new(0.5, 0.002, 0.1, &tb());
        for i in 0..4000 {
            let pv = 0.5 + 0.05 * libm::sin(i as f64 * 0.01);
            lock.update(pv);
            if libm::fabs(pv - 0.5) > 0.002 {
                assert!(!lock.is_locked());
            }
        }
        for i in 0..4000 {
            let pv = if i % 2 == 0 { 0.45 } else { 0.55 };
            assert!(!lock.update(pv));
        }
    }

    #[test]
    fn not_ready_before_first_estimate() {
        let mut pll = PhaseLockedLoop::new(PllConfig::default(), tb()).unwrap();
        assert_eq!(pll.step(0.0), Err(Error::NotReady));
        pll.set_reference_frequency(50.0).unwrap();
        assert!(pll.step(0.0).is_ok());
    }

    #[test]
    fn zero_error_leaves_zcd_frequency_untouched() {
        // quadrature detector with both inputs at zero phase offset: pv 0 = setpoint
        let config = PllConfig {
            detector_mode: DetectorMode::Quadrature,
            loop_filter: LoopFilterConfig::PeriodAverage { periods: 1.0 },
            ..PllConfig::default()
        };
        let mut pll = PhaseLockedLoop::new(config, tb()).unwrap();
        pll.set_reference_frequency(50.0).unwrap();
        for _ in 0..10 {
            pll.step(0.0).unwrap();
            assert_eq!(pll.telemetry().frequency_command_hz, 50.0);
        }
    }

    #[test]
    fn config_validation() {
        let ok = PllConfig::default();
        assert!(ok.validate(&tb()).is_ok());
        for bad in [
            PllConfig { lock_band: 0.0, ..ok },
            PllConfig { lock_dwell_s: -1.0, ..ok },
            PllConfig { phase_shift_rad: 7.0, ..ok },
            PllConfig { min_frequency_hz: 90.0, ..ok },
            PllConfig { loop_filter: LoopFilterConfig::FirstOrder { cutoff_hz: 0.0 }, ..ok },
            PllConfig { loop_filter: LoopFilterConfig::PeriodAverage { periods: 0.0 }, ..ok },
        ] {
            assert!(PhaseLockedLoop::new(bad, tb()).is_err(), "{bad:?}");
        }
        assert_eq!(ok.setpoint(), 0.5);
    }
}
