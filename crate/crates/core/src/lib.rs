//! Discrete-time building blocks for synchronizing a single-phase inverter to
//! a grid reference.
//!
//! The crate is `no_std` (it needs `alloc` for sample buffers) so the same
//! blocks can run on a controller or inside the desktop harness:
//!
//! - [`signals`]: seeded reference waveforms with frequency/phase step events
//! - [`dsp`]: low-pass filters, PID controller, numerically controlled oscillator
//! - [`zcd`]: rising-edge zero-crossing frequency estimator with hysteresis re-arm
//! - [`pll`]: product phase detector loop that trims the ZCD frequency with a PID
//! - [`inverter`]: sine-triangle SPWM, square-wave baseline, output filter and
//!   harmonic analysis
//!
//! All blocks advance by exactly one sample per `step` call at the rate of the
//! [`TimeBase`] they were built with.
// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#![no_std]

extern crate alloc;

pub mod dft;
pub mod dsp;
mod error;
pub mod inverter;
pub mod pll;
pub mod signals;
pub mod zcd;

pub use error::{Error, Result};
pub use signals::TimeBase;

pub(crate) fn ensure_finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let wrapped = libm::fmod(phase, core::f64::consts::TAU);
    let wrapped = if wrapped < 0.0 {
        wrapped + core::f64::consts::TAU
    } else {
        wrapped
    };
    // fmod of a tiny negative value can round back up to exactly 2π
    if wrapped >= core::f64::consts::TAU {
        0.0
    } else {
        wrapped
    }
}
