use core::f64::consts::TAU;

use crate::signals::TimeBase;
use crate::{wrap_phase, Error, Result};

/// Numerically controlled oscillator: a phase accumulator in `[0, 2π)`
/// advanced by `2π·f·dt` per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nco {
    phase: f64,
}

impl Nco {
    pub fn new(initial_phase_rad: f64) -> Self {
        Self {
            phase: wrap_phase(initial_phase_rad),
        }
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// `sin` of the current phase without advancing.
    pub fn sample(&self) -> f64 {
        libm::sin(self.phase)
    }

    /// Advances by one step at `frequency_hz` and returns the new sample.
    pub fn step(&mut self, frequency_hz: f64, tb: &TimeBase) -> Result<f64> {
        if !(frequency_hz >= 0.0) {
            return Err(Error::InvalidParameter("NCO frequency must be >= 0"));
        }
        tb.check_below_nyquist(frequency_hz)?;
        let mut next = self.phase + TAU * frequency_hz * tb.dt();
        if next >= TAU {
            next -= TAU;
        }
        self.phase = if next >= TAU { wrap_phase(next) } else { next };
        Ok(self.sample())
    }
}

impl Default for Nco {
    fn default() -> Self {
        Self::new(0.0)
    }
}
