//! Rising-edge zero-crossing frequency estimator with hysteresis validation.
//!
//! While armed, a sample pair with `prev < 0 <= cur` registers a candidate
//! crossing, timestamped by linear interpolation between the two samples.
//! Further rising zeros before validation (noise chatter) replace the
//! candidate. The candidate is validated once the signal rises above the
//! positive hysteresis level: it becomes the new reference crossing and the
//! period against the previous one is emitted as an estimate. The detector
//! re-arms only after the signal then falls below the negative level.
//!
//! With noise whose magnitude stays below both levels, the last rising zero
//! before the positive excursion is the only candidate that can validate in
//! each period, so exactly one crossing per period is counted.

use crate::signals::TimeBase;
use crate::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisBand {
    positive_level: f64,
    negative_level: f64,
}

impl HysteresisBand {
    pub fn new(positive_level: f64, negative_level: f64) -> Result<Self> {
        if !(negative_level < 0.0 && 0.0 < positive_level)
            || !positive_level.is_finite()
            || !negative_level.is_finite()
        {
            return Err(Error::InvalidParameter(
                "hysteresis levels must satisfy negative < 0 < positive",
            ));
        }
        Ok(Self {
            positive_level,
            negative_level,
        })
    }

    pub fn symmetric(level: f64) -> Result<Self> {
        Self::new(level, -level)
    }

    pub fn positive_level(&self) -> f64 {
        self.positive_level
    }

    pub fn negative_level(&self) -> f64 {
        self.negative_level
    }

    /// Smaller of the two level magnitudes.
    pub fn min_magnitude(&self) -> f64 {
        self.positive_level.min(-self.negative_level)
    }
}

impl Default for HysteresisBand {
    fn default() -> Self {
        Self {
            positive_level: 0.1,
            negative_level: -0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZcdStage {
    /// Waiting for a rising zero crossing.
    Armed,
    /// Candidate registered; waiting for the positive hysteresis level.
    AwaitPositive,
    /// Waiting for the negative hysteresis level before re-arming.
    AwaitNegative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyEstimate {
    pub hz: f64,
    /// Interpolated time of the crossing that closed the measured period.
    pub crossing_time_s: f64,
    /// Time of the sample on which the estimate became available.
    pub emitted_at_s: f64,
}

#[derive(Debug, Clone)]
pub struct ZeroCrossingDetector {
    band: HysteresisBand,
    tb: TimeBase,
    stage: ZcdStage,
    previous_sample: Option<f64>,
    previous_crossing_s: Option<f64>,
    candidate_s: Option<f64>,
    estimate_hz: Option<f64>,
    smoothing: Option<f64>,
    sample_index: u64,
    crossings: u64,
}

impl ZeroCrossingDetector {
    pub fn new(band: HysteresisBand, tb: TimeBase) -> Self {
        Self {
            band,
            tb,
            stage: ZcdStage::Armed,
            previous_sample: None,
            previous_crossing_s: None,
            candidate_s: None,
            estimate_hz: None,
            smoothing: None,
            sample_index: 0,
            crossings: 0,
        }
    }

    /// Exponential smoothing of successive estimates, `alpha` in `(0, 1]`.
    /// `alpha = 1` is equivalent to no smoothing.
    pub fn with_smoothing(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter("smoothing factor must lie in (0, 1]"));
        }
        self.smoothing = Some(alpha);
        Ok(self)
    }

    pub fn stage(&self) -> ZcdStage {
        self.stage
    }

    pub fn estimate_hz(&self) -> Option<f64> {
        self.estimate_hz
    }

    /// Number of validated crossings so far.
    pub fn crossings(&self) -> u64 {
        self.crossings
    }

    pub fn band(&self) -> HysteresisBand {
        self.band
    }

    pub fn time_base(&self) -> TimeBase {
        self.tb
    }

    pub fn step(&mut self, sample: f64) -> Result<Option<FrequencyEstimate>> {
        let sample = ensure_finite(sample)?;
        let index = self.sample_index;
        let mut emitted = None;
        let rising = match self.previous_sample {
            Some(prev) if prev < 0.0 && sample >= 0.0 => {
                Some(interpolate_crossing(prev, sample, index - 1, &self.tb)?)
            }
            _ => None,
        };
        match self.stage {
            ZcdStage::Armed => {
                if let Some(t) = rising {
                    self.candidate_s = Some(t);
                    self.stage = ZcdStage::AwaitPositive;
                }
            }
            ZcdStage::AwaitPositive => {
                if rising.is_some() {
                    self.candidate_s = rising;
                }
            }
            ZcdStage::AwaitNegative => {
                if sample < self.band.negative_level {
                    self.stage = ZcdStage::Armed;
                }
            }
        }
        // a single sample can both register and validate a candidate
        if self.stage == ZcdStage::AwaitPositive && sample > self.band.positive_level {
            if let Some(t) = self.candidate_s.take() {
                emitted = self.validate(t, index);
            }
            self.stage = ZcdStage::AwaitNegative;
        }
        self.previous_sample = Some(sample);
        self.sample_index += 1;
        Ok(emitted)
    }

    fn validate(&mut self, crossing_s: f64, index: u64) -> Option<FrequencyEstimate> {
        self.crossings += 1;
        let previous = self.previous_crossing_s.replace(crossing_s)?;
        let raw = frequency_from_crossings(previous, crossing_s).ok()?;
        if raw >= self.tb.nyquist_hz() {
            return None;
        }
        let hz = match (self.smoothing, self.estimate_hz) {
            (Some(alpha), Some(last)) => last + alpha * (raw - last),
            _ => raw,
        };
        self.estimate_hz = Some(hz);
        Some(FrequencyEstimate {
            hz,
            crossing_time_s: crossing_s,
            emitted_at_s: self.tb.time_of(index),
        })
    }
}

/// Time of the zero between samples `prev_index` and `prev_index + 1`,
/// assuming a straight line between them.
pub fn interpolate_crossing(prev: f64, cur: f64, prev_index: u64, tb: &TimeBase) -> Result<f64> {
    if !(prev < 0.0 && cur >= 0.0) {
        return Err(Error::ContractViolation(
            "crossing interpolation needs prev < 0 <= cur",
        ));
    }
    let fraction = (prev / (prev - cur)).clamp(0.0, 1.0);
    Ok((prev_index as f64 + fraction) / tb.sample_rate_hz())
}

pub fn frequency_from_crossings(t1: f64, t2: f64) -> Result<f64> {
    if !(t2 > t1) || !t1.is_finite() || !t2.is_finite() {
        return Err(Error::ContractViolation("second crossing must follow the first"));
    }
    Ok(1.0 / (t2 - t1))
}
