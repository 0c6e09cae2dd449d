//! Fixed-step control blocks shared by the PLL and the inverter model.

mod filter;
mod nco;
mod pid;

pub use filter::{FilterKind, LowPassFilter};
pub use nco::Nco;
pub use pid::{PidController, PidGains};
