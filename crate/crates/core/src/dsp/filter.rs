use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use crate::signals::TimeBase;
use crate::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// One-pole IIR, bilinear transform prewarped at the cutoff.
    FirstOrder,
    /// Two-pole Butterworth IIR, bilinear transform prewarped at the cutoff.
    SecondOrder,
    /// Boxcar average over an adjustable (fractional) number of samples.
    /// Averaging over one reference period nulls the 2f detector ripple and
    /// all of its harmonics.
    PeriodAverage,
}

/// Low-pass filter with unit DC gain.
#[derive(Debug, Clone)]
pub struct LowPassFilter {
    kind: FilterKind,
    tb: TimeBase,
    inner: Inner,
    output: f64,
}

#[derive(Debug, Clone)]
enum Inner {
    Biquad(Biquad),
    Average(MovingAverage),
}

impl LowPassFilter {
    pub fn first_order(cutoff_hz: f64, tb: TimeBase) -> Result<Self> {
        check_cutoff(cutoff_hz, &tb)?;
        let k = libm::tan(PI * cutoff_hz / tb.sample_rate_hz());
        let b = k / (1.0 + k);
        let biquad = Biquad::new(cutoff_hz, [b, b, 0.0], [(k - 1.0) / (k + 1.0), 0.0])?;
        Ok(Self::from_inner(FilterKind::FirstOrder, tb, Inner::Biquad(biquad)))
    }

    pub fn second_order(cutoff_hz: f64, tb: TimeBase) -> Result<Self> {
        check_cutoff(cutoff_hz, &tb)?;
        let k = libm::tan(PI * cutoff_hz / tb.sample_rate_hz());
        let k2 = k * k;
        let norm = 1.0 + SQRT_2 * k + k2;
        let b0 = k2 / norm;
        let biquad = Biquad::new(
            cutoff_hz,
            [b0, 2.0 * b0, b0],
            [2.0 * (k2 - 1.0) / norm, (1.0 - SQRT_2 * k + k2) / norm],
        )?;
        Ok(Self::from_inner(FilterKind::SecondOrder, tb, Inner::Biquad(biquad)))
    }

    /// Moving average over `window_s` seconds; the window can later be changed
    /// with [`set_window`](Self::set_window) up to `max_window_s`.
    pub fn period_average(window_s: f64, max_window_s: f64, tb: TimeBase) -> Result<Self> {
        if !(max_window_s.is_finite() && max_window_s > 0.0) {
            return Err(Error::InvalidParameter("maximum averaging window must be positive"));
        }
        let capacity = libm::ceil(max_window_s * tb.sample_rate_hz()) as usize + 2;
        let mut avg = MovingAverage {
            history: vec![0.0; capacity],
            pos: 0,
            seen: 0,
            window: 1.0,
            whole: 1,
            frac: 0.0,
            sum: 0.0,
        };
        avg.set_window(window_s * tb.sample_rate_hz())?;
        Ok(Self::from_inner(FilterKind::PeriodAverage, tb, Inner::Average(avg)))
    }

    fn from_inner(kind: FilterKind, tb: TimeBase, inner: Inner) -> Self {
        Self {
            kind,
            tb,
            inner,
            output: 0.0,
        }
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    /// Cutoff for the IIR kinds; first response null (`1/window`) for the
    /// moving average.
    pub fn cutoff_hz(&self) -> f64 {
        match &self.inner {
            Inner::Biquad(b) => b.cutoff_hz,
            Inner::Average(a) => self.tb.sample_rate_hz() / a.window,
        }
    }

    /// Static gain of the discretized recurrence.
    pub fn dc_gain(&self) -> f64 {
        match &self.inner {
            Inner::Biquad(b) => b.dc_gain(),
            Inner::Average(_) => 1.0,
        }
    }

    /// Changes the averaging window. Only valid for [`FilterKind::PeriodAverage`].
    pub fn set_window(&mut self, window_s: f64) -> Result<()> {
        match &mut self.inner {
            Inner::Average(a) => a.set_window(window_s * self.tb.sample_rate_hz()),
            Inner::Biquad(_) => Err(Error::InvalidParameter(
                "only the averaging filter has an adjustable window",
            )),
        }
    }

    /// False while a moving average has not yet seen a full window.
    pub fn is_primed(&self) -> bool {
        match &self.inner {
            Inner::Biquad(_) => true,
            Inner::Average(a) => a.is_primed(),
        }
    }

    pub fn output(&self) -> f64 {
        self.output
    }

    pub fn step(&mut self, x: f64) -> Result<f64> {
        let x = ensure_finite(x)?;
        self.output = match &mut self.inner {
            Inner::Biquad(b) => b.step(x),
            Inner::Average(a) => a.step(x),
        };
        Ok(self.output)
    }

    pub fn reset(&mut self) {
        self.output = 0.0;
        match &mut self.inner {
            Inner::Biquad(b) => b.reset(),
            Inner::Average(a) => a.reset(),
        }
    }
}

fn check_cutoff(cutoff_hz: f64, tb: &TimeBase) -> Result<()> {
    if !(cutoff_hz > 0.0) {
        return Err(Error::InvalidParameter("cutoff must be positive"));
    }
    tb.check_below_nyquist(cutoff_hz)
}

#[derive(Debug, Clone)]
struct Biquad {
    cutoff_hz: f64,
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn new(cutoff_hz: f64, b: [f64; 3], a: [f64; 2]) -> Result<Self> {
        let biquad = Self {
            cutoff_hz,
            b,
            a,
            x: [0.0; 2],
            y: [0.0; 2],
        };
        if libm::fabs(biquad.dc_gain() - 1.0) > 1e-9 {
            return Err(Error::InvalidParameter("filter DC gain is not unity"));
        }
        Ok(biquad)
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }

    fn reset(&mut self) {
        self.x = [0.0; 2];
        self.y = [0.0; 2];
    }
}

/// Boxcar with a fractional length `whole + frac`: the oldest sample in the
/// window enters with weight `frac`.
#[derive(Debug, Clone)]
struct MovingAverage {
    history: Vec<f64>,
    pos: usize,
    seen: usize,
    window: f64,
    whole: usize,
    frac: f64,
    /// Sum of the newest `min(seen, whole)` samples.
    sum: f64,
}

impl MovingAverage {
    fn set_window(&mut self, samples: f64) -> Result<()> {
        if !(samples.is_finite() && samples >= 1.0) {
            return Err(Error::InvalidParameter("averaging window shorter than one sample"));
        }
        if samples + 1.0 > (self.history.len() - 1) as f64 {
            return Err(Error::InvalidParameter("averaging window exceeds its capacity"));
        }
        self.window = samples;
        self.whole = libm::floor(samples) as usize;
        self.frac = samples - self.whole as f64;
        self.resum();
        Ok(())
    }

    fn back(&self, k: usize) -> f64 {
        // sample written k steps before the newest one
        let cap = self.history.len();
        self.history[(self.pos + cap - 1 - k) % cap]
    }

    fn resum(&mut self) {
        let n = self.seen.min(self.whole);
        self.sum = (0..n).map(|k| self.back(k)).sum();
    }

    fn is_primed(&self) -> bool {
        let needed = if self.frac > 0.0 { self.whole + 1 } else { self.whole };
        self.seen >= needed
    }

    fn step(&mut self, x: f64) -> f64 {
        let cap = self.history.len();
        self.history[self.pos] = x;
        self.pos = (self.pos + 1) % cap;
        self.seen = self.seen.saturating_add(1);
        self.sum += x;
        if self.seen > self.whole {
            self.sum -= self.back(self.whole);
        }
        if self.pos == 0 {
            // bound rounding drift of the running sum
            self.resum();
        }
        if self.is_primed() {
            (self.sum + self.frac * self.back(self.whole)) / self.window
        } else {
            self.sum / self.seen.min(self.whole) as f64
        }
    }

    fn reset(&mut self) {
        self.history.iter_mut().for_each(|h| *h = 0.0);
        self.pos = 0;
        self.seen = 0;
        self.sum = 0.0;
    }
}
