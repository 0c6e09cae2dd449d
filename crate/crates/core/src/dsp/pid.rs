use crate::signals::TimeBase;
use crate::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

/// Discrete PID with rectangular-rule integral and backward-difference
/// derivative. `error = setpoint - process_variable`.
///
/// With anti-windup enabled the integral is not updated on any step whose
/// unclamped output falls outside the output limits.
#[derive(Debug, Clone)]
pub struct PidController {
    gains: PidGains,
    setpoint: f64,
    dt: f64,
    min: f64,
    max: f64,
    anti_windup: bool,
    integral: f64,
    prev_error: Option<f64>,
    saturated: bool,
}

impl PidController {
    pub fn new(gains: PidGains, setpoint: f64, limits: (f64, f64), tb: &TimeBase) -> Result<Self> {
        let PidGains { kp, ki, kd } = gains;
        if !(kp.is_finite() && ki.is_finite() && kd.is_finite() && setpoint.is_finite()) {
            return Err(Error::InvalidParameter("PID gains and setpoint must be finite"));
        }
        let (min, max) = limits;
        if !(min < max) || min.is_nan() || max.is_nan() {
            return Err(Error::InvalidParameter("PID output limits need min < max"));
        }
        Ok(Self {
            gains,
            setpoint,
            dt: tb.dt(),
            min,
            max,
            anti_windup: true,
            integral: 0.0,
            prev_error: None,
            saturated: false,
        })
    }

    pub fn with_anti_windup(mut self, enabled: bool) -> Self {
        self.anti_windup = enabled;
        self
    }

    pub fn gains(&self) -> PidGains {
        self.gains
    }

    pub fn setpoint(&self) -> f64 {
        self.setpoint
    }

    /// Accumulated `∫ error dt`.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    pub fn limits(&self) -> (f64, f64) {
        (self.min, self.max)
    }

    pub fn step(&mut self, process_variable: f64) -> Result<f64> {
        let pv = ensure_finite(process_variable)?;
        let PidGains { kp, ki, kd } = self.gains;
        let error = self.setpoint - pv;
        let derivative = self
            .prev_error
            .map_or(0.0, |prev| (error - prev) / self.dt);
        let integral = self.integral + error * self.dt;
        let raw = kp * error + ki * integral + kd * derivative;
        if !raw.is_finite() {
            return Err(Error::NonFinite);
        }
        let output = raw.clamp(self.min, self.max);
        self.saturated = output != raw;
        if !(self.anti_windup && self.saturated) {
            self.integral = integral;
        }
        self.prev_error = Some(error);
        Ok(output)
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
        self.saturated = false;
    }
}
