use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Error {
    /// A NaN or infinite value reached a block input.
    NonFinite,
    /// A frequency at or above the Nyquist limit of the time base.
    Aliasing { frequency_hz: f64, nyquist_hz: f64 },
    /// A configuration value outside its legal range.
    InvalidParameter(&'static str),
    /// A caller broke an operation precondition.
    ContractViolation(&'static str),
    /// SPWM reference beyond the linear modulation range.
    OverModulation { reference: f64, limit: f64 },
    /// The PLL was stepped before it received a frequency estimate.
    NotReady,
    /// The PLL frequency command stayed clamped past the divergence timeout.
    Diverged { clamped_for_s: f64 },
    /// A sequence could not be trimmed to a whole number of periods.
    NonIntegerPeriods,
    /// An analysis window shorter than the operation needs.
    WindowTooShort { needed: usize, got: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite => write!(f, "non-finite input sample"),
            Error::Aliasing {
                frequency_hz,
                nyquist_hz,
            } => write!(
                f,
                "frequency {frequency_hz} Hz aliases (Nyquist limit {nyquist_hz} Hz)"
            ),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::ContractViolation(what) => write!(f, "contract violation: {what}"),
            Error::OverModulation { reference, limit } => write!(
                f,
                "over-modulation: reference {reference} exceeds {limit}"
            ),
            Error::NotReady => write!(f, "no frequency estimate available yet"),
            Error::Diverged { clamped_for_s } => write!(
                f,
                "loop diverged: frequency command clamped for {clamped_for_s} s"
            ),
            Error::NonIntegerPeriods => {
                write!(f, "sequence does not cover a whole number of periods")
            }
            Error::WindowTooShort { needed, got } => {
                write!(f, "window too short: need {needed} samples, got {got}")
            }
        }
    }
}

impl core::error::Error for Error {}
