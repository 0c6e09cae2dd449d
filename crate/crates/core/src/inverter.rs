//! Behavioral inverter: sine-triangle SPWM or square-wave switching into a
//! second-order output filter, plus harmonic analysis of the result.

use alloc::vec::Vec;

use crate::dft::{project, whole_period_len};
use crate::dsp::LowPassFilter;
use crate::signals::TimeBase;
use crate::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpwmScheme {
    /// Two-level output `±Vdc`: both bridge legs switch together.
    Bipolar,
    /// Three-level output `{+Vdc, 0, −Vdc}`: each leg compares against its
    /// own sign of the reference.
    Unipolar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpwmConfig {
    pub carrier_hz: f64,
    pub modulation_index: f64,
    pub dc_bus_volts: f64,
    pub scheme: SpwmScheme,
}

impl Default for SpwmConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 5000.0,
            modulation_index: 0.8,
            dc_bus_volts: 1.0,
            scheme: SpwmScheme::Bipolar,
        }
    }
}

impl SpwmConfig {
    /// Checks the carrier against the time base and the highest fundamental
    /// it will modulate.
    pub fn validate(&self, tb: &TimeBase, max_fundamental_hz: f64) -> Result<()> {
        if !(self.modulation_index > 0.0 && self.modulation_index <= 1.0) {
            return Err(Error::InvalidParameter("modulation index must lie in (0, 1]"));
        }
        if !(self.dc_bus_volts > 0.0 && self.dc_bus_volts.is_finite()) {
            return Err(Error::InvalidParameter("DC bus voltage must be positive"));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::InvalidParameter("carrier frequency must be positive"));
        }
        if self.carrier_hz < 20.0 * max_fundamental_hz {
            return Err(Error::InvalidParameter(
                "carrier must be at least 20x the fundamental",
            ));
        }
        if self.carrier_hz > tb.sample_rate_hz() / 4.0 {
            return Err(Error::InvalidParameter(
                "carrier needs at least 4 samples per period",
            ));
        }
        Ok(())
    }
}

/// Symmetric triangular carrier with peaks ±1: −1 at the start of each
/// carrier period, +1 at mid-period.
pub fn triangle(carrier_hz: f64, t: f64) -> f64 {
    let cycles = carrier_hz * t;
    let p = cycles - libm::floor(cycles);
    1.0 - 4.0 * libm::fabs(p - 0.5)
}

/// Switching level for one sample of the modulating reference at time `t`.
pub fn spwm_step(cfg: &SpwmConfig, reference_sample: f64, t: f64) -> Result<f64> {
    let reference = ensure_finite(reference_sample)?;
    let modulating = cfg.modulation_index * reference;
    if libm::fabs(modulating) > 1.0 {
        return Err(Error::OverModulation {
            reference,
            limit: 1.0 / cfg.modulation_index,
        });
    }
    let carrier = triangle(cfg.carrier_hz, ensure_finite(t)?);
    let vdc = cfg.dc_bus_volts;
    Ok(match cfg.scheme {
        SpwmScheme::Bipolar => {
            if modulating >= carrier {
                vdc
            } else {
                -vdc
            }
        }
        SpwmScheme::Unipolar => {
            let leg_a = if modulating >= carrier { 1.0 } else { 0.0 };
            let leg_b = if -modulating >= carrier { 1.0 } else { 0.0 };
            vdc * (leg_a - leg_b)
        }
    })
}

/// Square-wave drive: `+Vdc` for a non-negative reference, `−Vdc` otherwise.
pub fn square_step(reference_sample: f64, dc_bus_volts: f64) -> f64 {
    if reference_sample >= 0.0 {
        dc_bus_volts
    } else {
        -dc_bus_volts
    }
}

/// Fraction of a unit interval on which a linear function running from `g0`
/// to `g1` is non-negative.
fn nonneg_fraction(g0: f64, g1: f64) -> f64 {
    match (g0 >= 0.0, g1 >= 0.0) {
        (true, true) => 1.0,
        (false, false) => 0.0,
        (true, false) => g0 / (g0 - g1),
        (false, true) => g1 / (g1 - g0),
    }
}

/// Fraction of `[t0, t1]` during which a modulating signal, linear from `m0`
/// to `m1`, is at or above the triangular carrier. The interval is split at
/// the carrier's peaks and troughs so each piece compares two straight lines.
fn on_fraction(carrier_hz: f64, t0: f64, t1: f64, m0: f64, m1: f64) -> f64 {
    let span = t1 - t0;
    let slope = (m1 - m0) / span;
    let half_cycles = 2.0 * carrier_hz;
    let mut on = 0.0;
    let mut a = t0;
    while a < t1 {
        let h = libm::floor(half_cycles * a);
        let b = ((h + 1.0) / half_cycles).min(t1);
        let b = if b <= a { t1 } else { b };
        let local = |t: f64| {
            let p = (half_cycles * t - h).clamp(0.0, 1.0);
            if libm::fmod(h, 2.0) == 0.0 {
                -1.0 + 2.0 * p
            } else {
                1.0 - 2.0 * p
            }
        };
        let ga = m0 + slope * (a - t0) - local(a);
        let gb = m0 + slope * (b - t0) - local(b);
        on += (b - a) * nonneg_fraction(ga, gb);
        a = b;
    }
    on / span
}

/// What drives the bridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    Spwm(SpwmConfig),
    Square { dc_bus_volts: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterSample {
    /// Bridge level at the sample instant.
    pub switching: f64,
    /// Mean bridge voltage over the preceding sample interval, with switching
    /// edges placed at their exact crossing times.
    pub applied: f64,
    /// Output filter voltage.
    pub output: f64,
}

/// Modulator, bridge and output filter.
///
/// The filter is driven with the interval-mean bridge voltage rather than
/// the point-sampled level: when the sample rate is a multiple of the
/// carrier, point sampling folds the carrier sidebands onto low-order
/// harmonics of the fundamental.
#[derive(Debug, Clone)]
pub struct InverterChain {
    drive: Drive,
    tb: TimeBase,
    filter: OutputFilter,
    previous_reference: Option<f64>,
    index: u64,
}

impl InverterChain {
    pub fn new(drive: Drive, filter_cutoff_hz: f64, tb: TimeBase) -> Result<Self> {
        if let Drive::Square { dc_bus_volts } = drive {
            if !(dc_bus_volts > 0.0 && dc_bus_volts.is_finite()) {
                return Err(Error::InvalidParameter("DC bus voltage must be positive"));
            }
        }
        Ok(Self {
            drive,
            tb,
            filter: OutputFilter::new(filter_cutoff_hz, tb)?,
            previous_reference: None,
            index: 0,
        })
    }

    pub fn drive(&self) -> Drive {
        self.drive
    }

    pub fn step(&mut self, reference_sample: f64) -> Result<InverterSample> {
        let reference = ensure_finite(reference_sample)?;
        let t1 = self.tb.time_of(self.index);
        let (switching, applied) = match self.drive {
            Drive::Spwm(cfg) => {
                let switching = spwm_step(&cfg, reference, t1)?;
                let applied = match self.previous_reference {
                    None => switching,
                    Some(previous) => {
                        let t0 = self.tb.time_of(self.index - 1);
                        let m0 = cfg.modulation_index * previous;
                        let m1 = cfg.modulation_index * reference;
                        let high = on_fraction(cfg.carrier_hz, t0, t1, m0, m1);
                        match cfg.scheme {
                            SpwmScheme::Bipolar => cfg.dc_bus_volts * (2.0 * high - 1.0),
                            SpwmScheme::Unipolar => {
                                let low = on_fraction(cfg.carrier_hz, t0, t1, -m0, -m1);
                                cfg.dc_bus_volts * (high - low)
                            }
                        }
                    }
                };
                (switching, applied)
            }
            Drive::Square { dc_bus_volts } => {
                let switching = square_step(reference, dc_bus_volts);
                let applied = match self.previous_reference {
                    None => switching,
                    Some(previous) => {
                        dc_bus_volts * (2.0 * nonneg_fraction(previous, reference) - 1.0)
                    }
                };
                (switching, applied)
            }
        };
        let output = self.filter.step(applied)?;
        self.previous_reference = Some(reference);
        self.index += 1;
        Ok(InverterSample {
            switching,
            applied,
            output,
        })
    }
}

/// Default cutoff of the analog output filter model.
pub const OUTPUT_FILTER_CUTOFF_HZ: f64 = 300.0;

/// Second-order low-pass standing in for the inverter's analog filter.
#[derive(Debug, Clone)]
pub struct OutputFilter {
    filter: LowPassFilter,
}

impl OutputFilter {
    pub fn new(cutoff_hz: f64, tb: TimeBase) -> Result<Self> {
        Ok(Self {
            filter: LowPassFilter::second_order(cutoff_hz, tb)?,
        })
    }

    pub fn step(&mut self, level: f64) -> Result<f64> {
        self.filter.step(level)
    }

    pub fn output(&self) -> f64 {
        self.filter.output()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub fundamental_hz: f64,
    /// Peak magnitudes; entry `k - 1` is harmonic order `k`.
    pub magnitudes: Vec<f64>,
    /// `sqrt(Σ_{k≥2} m_k²) / m_1`.
    pub thd: f64,
    /// Samples analyzed after trimming to whole periods.
    pub samples: usize,
}

impl SpectrumResult {
    pub fn magnitude(&self, order: usize) -> f64 {
        self.magnitudes[order - 1]
    }

    /// `m_k / m_1`.
    pub fn relative(&self, order: usize) -> f64 {
        self.magnitude(order) / self.magnitude(1)
    }
}

/// Harmonic magnitudes of `seq` at orders `1..=max_order` of `fundamental_hz`,
/// over the longest whole-period prefix of the sequence.
pub fn spectrum(
    seq: &[f64],
    tb: &TimeBase,
    fundamental_hz: f64,
    max_order: usize,
) -> Result<SpectrumResult> {
    if max_order == 0 {
        return Err(Error::InvalidParameter("max order must be >= 1"));
    }
    tb.check_below_nyquist(max_order as f64 * fundamental_hz)?;
    let n = whole_period_len(seq.len(), tb, fundamental_hz)?;
    let seq = &seq[..n];
    let magnitudes: Vec<f64> = (1..=max_order)
        .map(|k| project(seq, tb, k as f64 * fundamental_hz).amplitude())
        .collect();
    let fundamental = magnitudes[0];
    let harmonic_power: f64 = magnitudes[1..].iter().map(|m| m * m).sum();
    let thd = if fundamental > 0.0 {
        libm::sqrt(harmonic_power) / fundamental
    } else {
        f64::INFINITY
    };
    Ok(SpectrumResult {
        fundamental_hz,
        magnitudes,
        thd,
        samples: n,
    })
}
