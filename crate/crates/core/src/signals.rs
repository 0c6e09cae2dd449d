//! Deterministic reference waveforms.
//!
//! A [`SignalSource`] streams samples of a (possibly distorted, noisy)
//! sinusoid whose frequency and phase can change at scheduled
//! [`StepEvent`]s. Phase is carried across events, so a frequency step never
//! produces a discontinuity in the waveform. Within a constant-frequency
//! segment the phase is computed from the sample count rather than by
//! repeated addition, which keeps whole-cycle sample points exact.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::{wrap_phase, Error, Result};

/// Fixed simulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBase {
    sample_rate_hz: f64,
    dt: f64,
}

impl TimeBase {
    pub fn new(sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter("sample rate must be positive"));
        }
        Ok(Self {
            sample_rate_hz,
            dt: 1.0 / sample_rate_hz,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    /// Time of sample `index`, computed as `index / fs` so integer multiples
    /// of the sample period are exact.
    pub fn time_of(&self, index: u64) -> f64 {
        index as f64 / self.sample_rate_hz
    }

    /// First sample index at or after `time_s`.
    pub fn index_at_or_after(&self, time_s: f64) -> u64 {
        let exact = time_s * self.sample_rate_hz;
        let nearest = libm::round(exact);
        if libm::fabs(exact - nearest) <= 1e-9 * nearest.max(1.0) {
            nearest as u64
        } else {
            libm::ceil(exact) as u64
        }
    }

    pub fn check_below_nyquist(&self, frequency_hz: f64) -> Result<()> {
        if frequency_hz.is_finite() && frequency_hz < self.nyquist_hz() {
            Ok(())
        } else {
            Err(Error::Aliasing {
                frequency_hz,
                nyquist_hz: self.nyquist_hz(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub order: u32,
    /// Amplitude relative to the fundamental.
    pub relative_amplitude: f64,
    pub phase_rad: f64,
}

/// Parametric sinusoid standing in for the grid voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub amplitude: f64,
    pub frequency_hz: f64,
    /// Initial phase in `[0, 2π)`.
    pub phase_rad: f64,
    pub dc_offset: f64,
    pub harmonics: Vec<Harmonic>,
    /// Standard deviation of additive Gaussian noise, volts.
    pub noise_std: f64,
    pub seed: u64,
}

impl SignalSpec {
    /// Clean unit-amplitude sine.
    pub fn sine(frequency_hz: f64) -> Self {
        Self {
            amplitude: 1.0,
            frequency_hz,
            phase_rad: 0.0,
            dc_offset: 0.0,
            harmonics: Vec::new(),
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn with_phase(mut self, phase_rad: f64) -> Self {
        self.phase_rad = phase_rad;
        self
    }

    pub fn with_noise(mut self, noise_std: f64, seed: u64) -> Self {
        self.noise_std = noise_std;
        self.seed = seed;
        self
    }

    pub fn validate(&self, tb: &TimeBase) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::InvalidParameter("amplitude must be finite and >= 0"));
        }
        if !(self.frequency_hz > 0.0) {
            return Err(Error::InvalidParameter("frequency must be positive"));
        }
        tb.check_below_nyquist(self.frequency_hz)?;
        if !(self.phase_rad.is_finite() && (0.0..TAU).contains(&self.phase_rad)) {
            return Err(Error::InvalidParameter("phase must lie in [0, 2π)"));
        }
        if !self.dc_offset.is_finite() {
            return Err(Error::InvalidParameter("dc offset must be finite"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("noise std must be finite and >= 0"));
        }
        for (i, h) in self.harmonics.iter().enumerate() {
            if h.order < 2 {
                return Err(Error::InvalidParameter("harmonic order must be >= 2"));
            }
            if self.harmonics[..i].iter().any(|other| other.order == h.order) {
                return Err(Error::InvalidParameter("harmonic orders must be distinct"));
            }
            if !(h.relative_amplitude.is_finite() && h.relative_amplitude >= 0.0) {
                return Err(Error::InvalidParameter(
                    "harmonic amplitude must be finite and >= 0",
                ));
            }
            if !h.phase_rad.is_finite() {
                return Err(Error::InvalidParameter("harmonic phase must be finite"));
            }
            tb.check_below_nyquist(self.frequency_hz * h.order as f64)?;
        }
        Ok(())
    }

    fn shape(&self, phase: f64) -> f64 {
        let mut v = libm::sin(phase);
        for h in &self.harmonics {
            v += h.relative_amplitude * libm::sin(h.order as f64 * phase + h.phase_rad);
        }
        self.dc_offset + self.amplitude * v
    }
}

/// Scheduled change of the reference frequency and/or phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub at_time_s: f64,
    pub new_frequency_hz: Option<f64>,
    pub phase_jump_rad: Option<f64>,
}

impl StepEvent {
    pub fn frequency(at_time_s: f64, new_frequency_hz: f64) -> Self {
        Self {
            at_time_s,
            new_frequency_hz: Some(new_frequency_hz),
            phase_jump_rad: None,
        }
    }

    pub fn phase_jump(at_time_s: f64, phase_jump_rad: f64) -> Self {
        Self {
            at_time_s,
            new_frequency_hz: None,
            phase_jump_rad: Some(phase_jump_rad),
        }
    }
}

pub fn validate_events(events: &[StepEvent], tb: &TimeBase) -> Result<()> {
    let mut last = 0.0;
    for ev in events {
        if !(ev.at_time_s.is_finite() && ev.at_time_s >= 0.0) {
            return Err(Error::InvalidParameter("event time must be >= 0"));
        }
        if ev.at_time_s < last {
            return Err(Error::InvalidParameter("events must be sorted by time"));
        }
        last = ev.at_time_s;
        if ev.new_frequency_hz.is_none() && ev.phase_jump_rad.is_none() {
            return Err(Error::InvalidParameter(
                "event needs a new frequency or a phase jump",
            ));
        }
        if let Some(f) = ev.new_frequency_hz {
            if !(f > 0.0) {
                return Err(Error::InvalidParameter("event frequency must be positive"));
            }
            tb.check_below_nyquist(f)?;
        }
        if let Some(j) = ev.phase_jump_rad {
            if !j.is_finite() {
                return Err(Error::InvalidParameter("phase jump must be finite"));
            }
        }
    }
    Ok(())
}

fn fract(x: f64) -> f64 {
    x - libm::floor(x)
}

/// Streaming generator for a [`SignalSpec`] plus step events.
#[derive(Debug, Clone)]
pub struct SignalSource {
    spec: SignalSpec,
    tb: TimeBase,
    events: Vec<StepEvent>,
    next_event: usize,
    segment_start: u64,
    segment_phase: f64,
    frequency_hz: f64,
    index: u64,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl SignalSource {
    pub fn new(spec: &SignalSpec, tb: TimeBase, events: &[StepEvent]) -> Result<Self> {
        spec.validate(&tb)?;
        validate_events(events, &tb)?;
        for ev in events {
            if let Some(f) = ev.new_frequency_hz {
                for h in &spec.harmonics {
                    tb.check_below_nyquist(f * h.order as f64)?;
                }
            }
        }
        let noise = if spec.noise_std > 0.0 {
            Some(
                Normal::new(0.0, spec.noise_std)
                    .map_err(|_| Error::InvalidParameter("noise std"))?,
            )
        } else {
            None
        };
        Ok(Self {
            spec: spec.clone(),
            tb,
            events: events.to_vec(),
            next_event: 0,
            segment_start: 0,
            segment_phase: spec.phase_rad,
            frequency_hz: spec.frequency_hz,
            index: 0,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            noise,
        })
    }

    fn segment_phase_at(&self, index: u64) -> f64 {
        let cycles = self.frequency_hz * (index - self.segment_start) as f64
            / self.tb.sample_rate_hz();
        wrap_phase(self.segment_phase + TAU * fract(cycles))
    }

    fn apply_due_events(&mut self) {
        while let Some(ev) = self.events.get(self.next_event) {
            if self.tb.index_at_or_after(ev.at_time_s) > self.index {
                break;
            }
            let phase = self.segment_phase_at(self.index);
            self.segment_phase = wrap_phase(phase + ev.phase_jump_rad.unwrap_or(0.0));
            self.segment_start = self.index;
            if let Some(f) = ev.new_frequency_hz {
                self.frequency_hz = f;
            }
            self.next_event += 1;
        }
    }

    /// Index of the sample that the next call to [`next_sample`] returns.
    ///
    /// [`next_sample`]: SignalSource::next_sample
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Instantaneous frequency at the current index.
    pub fn frequency_hz(&mut self) -> f64 {
        self.apply_due_events();
        self.frequency_hz
    }

    /// Phase in `[0, 2π)` of the sample the next call returns.
    pub fn phase(&mut self) -> f64 {
        self.apply_due_events();
        self.segment_phase_at(self.index)
    }

    pub fn next_sample(&mut self) -> f64 {
        self.apply_due_events();
        let phase = self.segment_phase_at(self.index);
        let mut v = self.spec.shape(phase);
        if let Some(noise) = &self.noise {
            v += noise.sample(&mut self.rng);
        }
        self.index += 1;
        v
    }
}

/// Generates exactly `n` samples.
pub fn generate(
    spec: &SignalSpec,
    tb: TimeBase,
    events: &[StepEvent],
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1"));
    }
    let mut src = SignalSource::new(spec, tb, events)?;
    Ok((0..n).map(|_| src.next_sample()).collect())
}

/// Phase of sample `index` of an event-free signal, in `[0, 2π)`.
pub fn phase_of(spec: &SignalSpec, tb: &TimeBase, index: u64) -> f64 {
    let cycles = spec.frequency_hz * index as f64 / tb.sample_rate_hz();
    wrap_phase(spec.phase_rad + TAU * fract(cycles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn tb() -> TimeBase {
        TimeBase::new(20_000.0).unwrap()
    }

    #[test]
    fn one_cycle_at_50hz() {
        let s = generate(&SignalSpec::sine(50.0), tb(), &[], 400).unwrap();
        assert_eq!(s.len(), 400);
        assert_eq!(s[0], 0.0);
        assert!((s[100] - 1.0).abs() < 1e-12);
        assert!((s[300] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn period_at_42_88() {
        let spec = SignalSpec::sine(42.88);
        let period = 1.0 / spec.frequency_hz;
        assert!((period - 0.023_32).abs() < 1e-5);
        // sample one period later is back at the start value
        let tb = TimeBase::new(42.88 * 1000.0).unwrap();
        let s = generate(&spec, tb, &[], 1001).unwrap();
        assert!(s[1000].abs() < 1e-12);
    }

    #[test]
    fn seeded_noise_is_repeatable() {
        let spec = SignalSpec::sine(50.0).with_noise(0.05, 7);
        let a = generate(&spec, tb(), &[], 2000).unwrap();
        let b = generate(&spec, tb(), &[], 2000).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = generate(&spec.clone().with_noise(0.05, 8), tb(), &[], 2000).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_aliasing() {
        assert!(matches!(
            generate(&SignalSpec::sine(10_000.0), tb(), &[], 10),
            Err(Error::Aliasing { .. })
        ));
        let ev = [StepEvent::frequency(0.01, 12_000.0)];
        assert!(matches!(
            generate(&SignalSpec::sine(50.0), tb(), &ev, 10),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn rejects_bad_harmonics_and_events() {
        let mut spec = SignalSpec::sine(50.0);
        spec.harmonics.push(Harmonic {
            order: 1,
            relative_amplitude: 0.1,
            phase_rad: 0.0,
        });
        assert!(spec.validate(&tb()).is_err());
        spec.harmonics[0].order = 3;
        spec.harmonics.push(spec.harmonics[0]);
        assert!(spec.validate(&tb()).is_err());

        let unsorted = [StepEvent::phase_jump(0.2, 0.1), StepEvent::phase_jump(0.1, 0.1)];
        assert!(validate_events(&unsorted, &tb()).is_err());
        let empty = [StepEvent {
            at_time_s: 0.1,
            new_frequency_hz: None,
            phase_jump_rad: None,
        }];
        assert!(validate_events(&empty, &tb()).is_err());
        assert!(generate(&SignalSpec::sine(50.0), tb(), &[], 0).is_err());
    }

    #[test]
    fn phase_of_examples() {
        let spec = SignalSpec::sine(50.0);
        assert_eq!(phase_of(&spec, &tb(), 0), 0.0);
        assert!((phase_of(&spec, &tb(), 200) - PI).abs() < 1e-12);
    }

    #[test]
    fn phase_of_matches_accumulation() {
        let spec = SignalSpec::sine(42.88);
        let step = TAU * 42.88 / 20_000.0;
        let mut acc = 0.0f64;
        for k in 0..20_000u64 {
            let got = phase_of(&spec, &tb(), k);
            let mut diff = (got - acc).abs();
            diff = diff.min(TAU - diff);
            assert!(diff < 1e-9, "k={k} got={got} acc={acc}");
            acc += step;
            if acc >= TAU {
                acc -= TAU;
            }
        }
    }

    #[test]
    fn source_phase_agrees_with_generate() {
        let spec = SignalSpec::sine(50.0).with_phase(0.3);
        let mut src = SignalSource::new(&spec, tb(), &[]).unwrap();
        for _ in 0..1000 {
            let p = src.phase();
            let v = src.next_sample();
            assert!((v - libm::sin(p)).abs() < 1e-15);
        }
    }

    #[test]
    fn frequency_step_keeps_phase_continuous() {
        let ev = [StepEvent::frequency(0.0123, 65.0)];
        let s = generate(&SignalSpec::sine(35.0), tb(), &ev, 1000).unwrap();
        let max_slope = TAU * 65.0 * tb().dt();
        for w in s.windows(2) {
            assert!((w[1] - w[0]).abs() <= max_slope + 1e-12);
        }
    }

    #[test]
    fn phase_jump_applies_at_event() {
        let ev = [StepEvent::phase_jump(0.005, PI)];
        let mut src = SignalSource::new(&SignalSpec::sine(50.0), tb(), &ev).unwrap();
        for _ in 0..100 {
            src.next_sample();
        }
        // quarter cycle reached exactly at the event, then flipped by π
        assert!((src.phase() - 1.5 * PI).abs() < 1e-12);
        assert!((src.next_sample() + 1.0).abs() < 1e-12);
    }
}
