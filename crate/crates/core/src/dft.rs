//! Single-bin discrete Fourier projection.

use core::f64::consts::TAU;

use crate::signals::TimeBase;
use crate::{Error, Result};

/// Largest whole-period prefix is accepted when its length is this close to
/// an integer number of samples.
const PERIOD_TOLERANCE_SAMPLES: f64 = 1e-6;

/// Complex sum `Σ x[n]·e^{-i·2π·f·n/fs}` over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub re: f64,
    pub im: f64,
    pub len: usize,
}

impl Projection {
    /// Peak amplitude of the sinusoid at the projected frequency (`2|X|/N`).
    pub fn amplitude(&self) -> f64 {
        2.0 * libm::hypot(self.re, self.im) / self.len as f64
    }

    /// Phase of the projection, radians. A sine of phase `φ` projects to `φ − π/2`.
    pub fn phase(&self) -> f64 {
        libm::atan2(self.im, self.re)
    }
}

pub fn project(seq: &[f64], tb: &TimeBase, frequency_hz: f64) -> Projection {
    let cycles_per_sample = frequency_hz / tb.sample_rate_hz();
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &x) in seq.iter().enumerate() {
        let cycles = cycles_per_sample * n as f64;
        let angle = TAU * (cycles - libm::floor(cycles));
        re += x * libm::cos(angle);
        im -= x * libm::sin(angle);
    }
    Projection {
        re,
        im,
        len: seq.len(),
    }
}

/// Length of the longest prefix of `len` samples that spans a whole number of
/// periods of `frequency_hz`.
pub fn whole_period_len(len: usize, tb: &TimeBase, frequency_hz: f64) -> Result<usize> {
    if !(frequency_hz > 0.0) {
        return Err(Error::InvalidParameter("frequency must be positive"));
    }
    let period = tb.sample_rate_hz() / frequency_hz;
    let max_periods = libm::floor(len as f64 / period) as u64;
    for p in (1..=max_periods).rev() {
        let n = p as f64 * period;
        let rounded = libm::round(n);
        if libm::fabs(n - rounded) <= PERIOD_TOLERANCE_SAMPLES && rounded as usize <= len {
            return Ok(rounded as usize);
        }
    }
    Err(Error::NonIntegerPeriods)
}
