//! Scenario files.
//!
//! A scenario is a TOML document. Every section is optional except the
//! reference frequency; missing keys take the library defaults and unknown
//! keys are rejected.
//!
//! ```toml
//! name = "freq50"
//! duration_s = 0.5
//! seed = 1
//!
//! [timebase]
//! sample_rate_hz = 20000
//!
//! [reference]
//! frequency_hz = 50.0
//!
//! [[reference.events]]
//! at_time_s = 0.25
//! new_frequency_hz = 49.0
//!
//! [pll]
//! kp = 15.0
//! loop_filter = { kind = "period_average", periods = 1 }
//!
//! [record]
//! channels = ["reference", "generated", "pv", "locked"]
//! ```

use std::fmt;
use std::path::Path;

use gridsync_core::dsp::PidGains;
use gridsync_core::inverter::{SpwmConfig, SpwmScheme, OUTPUT_FILTER_CUTOFF_HZ};
use gridsync_core::pll::{DetectorMode, LoopFilterConfig, PllConfig};
use gridsync_core::signals::{validate_events, Harmonic, SignalSpec, StepEvent};
use gridsync_core::zcd::HysteresisBand;
use gridsync_core::TimeBase;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid scenario: {context}")]
    Core {
        context: &'static str,
        #[source]
        source: gridsync_core::Error,
    },
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn core_err(context: &'static str) -> impl FnOnce(gridsync_core::Error) -> ScenarioError {
    move |source| ScenarioError::Core { context, source }
}

/// Recordable trace channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Reference (grid) voltage.
    Reference,
    /// Generated waveform: the phase-shifted NCO output, or the inverter
    /// output normalized by `m·Vdc` when the inverter is in the loop.
    Generated,
    /// Loop filter output.
    Pv,
    /// PID output, Hz.
    Control,
    /// NCO frequency command, Hz.
    #[serde(rename = "f_cmd")]
    FrequencyCommand,
    NcoPhase,
    /// 1 while the lock detector reports lock.
    Locked,
    /// Latest ZCD estimate, 0 before the first one.
    ZcdHz,
    /// Bridge level at the sample instant.
    Switching,
    /// Inverter output filter voltage.
    Inverter,
    /// Square-wave drive through the same output filter.
    Square,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Reference => "reference",
            Channel::Generated => "generated",
            Channel::Pv => "pv",
            Channel::Control => "control",
            Channel::FrequencyCommand => "f_cmd",
            Channel::NcoPhase => "nco_phase",
            Channel::Locked => "locked",
            Channel::ZcdHz => "zcd_hz",
            Channel::Switching => "switching",
            Channel::Inverter => "inverter",
            Channel::Square => "square",
        }
    }

    fn needs_pll(self) -> bool {
        matches!(
            self,
            Channel::Generated
                | Channel::Pv
                | Channel::Control
                | Channel::FrequencyCommand
                | Channel::NcoPhase
                | Channel::Locked
        )
    }

    fn needs_inverter(self) -> bool {
        matches!(self, Channel::Switching | Channel::Inverter | Channel::Square)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZcdOptions {
    pub band: HysteresisBand,
    pub smoothing: Option<f64>,
    /// The run fails if no frequency estimate exists by this time.
    pub deadline_s: f64,
}

impl Default for ZcdOptions {
    fn default() -> Self {
        Self {
            band: HysteresisBand::default(),
            smoothing: None,
            deadline_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterOptions {
    pub spwm: SpwmConfig,
    pub filter_cutoff_hz: f64,
    /// Start of the spectrum window; earlier samples are filter transient.
    pub analysis_start_s: f64,
    pub max_order: usize,
}

impl Default for InverterOptions {
    fn default() -> Self {
        Self {
            spwm: SpwmConfig::default(),
            filter_cutoff_hz: OUTPUT_FILTER_CUTOFF_HZ,
            analysis_start_s: 0.2,
            max_order: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    /// Seeds the reference noise; overrides `reference.seed`.
    pub seed: u64,
    pub reference: SignalSpec,
    pub events: Vec<StepEvent>,
    pub zcd: ZcdOptions,
    /// `None` runs the frequency estimator alone.
    pub pll: Option<PllConfig>,
    /// With the PLL enabled the inverter is driven by the NCO and its
    /// filtered output is the loop feedback; otherwise it is driven by the
    /// reference directly.
    pub inverter: Option<InverterOptions>,
    pub record: Vec<Channel>,
}

impl Scenario {
    /// A clean unit sine at `frequency_hz`, 20 kHz, 0.5 s, default loop.
    pub fn clean(name: &str, frequency_hz: f64) -> Self {
        Self {
            name: name.to_string(),
            sample_rate_hz: 20_000.0,
            duration_s: 0.5,
            seed: 0,
            reference: SignalSpec::sine(frequency_hz),
            events: Vec::new(),
            zcd: ZcdOptions::default(),
            pll: Some(PllConfig::default()),
            inverter: None,
            record: vec![Channel::Reference, Channel::ZcdHz],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        let scenario = file.into_scenario()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn time_base(&self) -> Result<TimeBase, ScenarioError> {
        TimeBase::new(self.sample_rate_hz).map_err(core_err("timebase.sample_rate_hz"))
    }

    pub fn sample_count(&self) -> u64 {
        (self.duration_s * self.sample_rate_hz).round() as u64
    }

    /// Reference spec with the scenario seed applied.
    pub fn reference_spec(&self) -> SignalSpec {
        let mut spec = self.reference.clone();
        spec.seed = self.seed;
        spec
    }

    /// Highest reference frequency over the run.
    pub fn max_reference_hz(&self) -> f64 {
        self.events
            .iter()
            .filter_map(|e| e.new_frequency_hz)
            .fold(self.reference.frequency_hz, f64::max)
    }

    fn reference_frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.reference.frequency_hz)
            .chain(self.events.iter().filter_map(|e| e.new_frequency_hz))
    }

    /// Checks every sub-configuration and the constraints between them.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration_s must be > 0"));
        }
        let tb = self.time_base()?;
        if self.sample_count() < 2 {
            return Err(invalid("duration_s must cover at least two samples"));
        }
        self.reference.validate(&tb).map_err(core_err("reference"))?;
        validate_events(&self.events, &tb).map_err(core_err("reference.events"))?;

        let band = self.zcd.band;
        let amplitude = self.reference.amplitude;
        // a zero-amplitude reference is the degenerate no-crossing case and
        // is left to fail at the deadline
        if amplitude > 0.0 && band.positive_level().max(-band.negative_level()) >= amplitude {
            return Err(invalid(format!(
                "hysteresis levels ({}, {}) must be below the reference amplitude {}",
                band.positive_level(),
                band.negative_level(),
                amplitude
            )));
        }
        if self.reference.dc_offset.abs() >= band.min_magnitude() {
            return Err(invalid(format!(
                "reference dc_offset {} must be inside the hysteresis band ±{}",
                self.reference.dc_offset,
                band.min_magnitude()
            )));
        }
        if let Some(alpha) = self.zcd.smoothing {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(invalid("zcd.smoothing must lie in (0, 1]"));
            }
        }
        if !(self.zcd.deadline_s > 0.0) {
            return Err(invalid("zcd.deadline_s must be > 0"));
        }

        if let Some(pll) = &self.pll {
            pll.validate(&tb).map_err(core_err("pll"))?;
            for f in self.reference_frequencies() {
                if f < pll.min_frequency_hz || f > pll.max_frequency_hz {
                    return Err(invalid(format!(
                        "reference frequency {f} Hz outside the pll range [{}, {}] Hz",
                        pll.min_frequency_hz, pll.max_frequency_hz
                    )));
                }
            }
        }

        if let Some(inv) = &self.inverter {
            let max_f = match &self.pll {
                Some(pll) => pll.max_frequency_hz.max(self.max_reference_hz()),
                None => self.max_reference_hz(),
            };
            inv.spwm.validate(&tb, max_f).map_err(core_err("inverter"))?;
            if !(inv.filter_cutoff_hz > 0.0) || inv.filter_cutoff_hz >= tb.nyquist_hz() {
                return Err(invalid("inverter.filter_cutoff_hz must lie in (0, nyquist)"));
            }
            if inv.max_order == 0 {
                return Err(invalid("inverter.max_order must be >= 1"));
            }
            if !(inv.analysis_start_s >= 0.0 && inv.analysis_start_s < self.duration_s) {
                return Err(invalid("inverter.analysis_start_s must lie in [0, duration_s)"));
            }
            if self.pll.is_none() && amplitude * inv.spwm.modulation_index > 1.0 {
                return Err(invalid(
                    "open-loop inverter: amplitude × modulation_index must not exceed 1",
                ));
            }
            if self.pll.is_some() {
                let mode = self.pll.as_ref().map(|p| p.detector_mode);
                if mode != Some(DetectorMode::Product) {
                    return Err(invalid("inverter in the loop needs pll.detector = \"product\""));
                }
            }
        }

        for ch in &self.record {
            if ch.needs_pll() && self.pll.is_none() {
                return Err(invalid(format!("record channel `{ch}` needs [pll] enabled")));
            }
            if ch.needs_inverter() && self.inverter.is_none() {
                return Err(invalid(format!("record channel `{ch}` needs an [inverter] section")));
            }
        }
        for (i, ch) in self.record.iter().enumerate() {
            if self.record[..i].contains(ch) {
                return Err(invalid(format!("record channel `{ch}` listed twice")));
            }
        }
        Ok(())
    }
}

// ---- file layout ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default = "default_name")]
    name: String,
    duration_s: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    timebase: TimebaseSection,
    reference: ReferenceSection,
    #[serde(default)]
    zcd: ZcdSection,
    #[serde(default)]
    pll: PllSection,
    inverter: Option<InverterSection>,
    #[serde(default)]
    record: RecordSection,
}

fn default_name() -> String {
    "scenario".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TimebaseSection {
    sample_rate_hz: f64,
}

impl Default for TimebaseSection {
    fn default() -> Self {
        Self {
            sample_rate_hz: 20_000.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceSection {
    #[serde(default = "one")]
    amplitude: f64,
    frequency_hz: f64,
    #[serde(default)]
    phase_rad: f64,
    #[serde(default)]
    dc_offset: f64,
    #[serde(default)]
    noise_std: f64,
    #[serde(default)]
    harmonics: Vec<HarmonicEntry>,
    #[serde(default)]
    events: Vec<EventEntry>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HarmonicEntry {
    order: u32,
    relative_amplitude: f64,
    #[serde(default)]
    phase_rad: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventEntry {
    at_time_s: f64,
    new_frequency_hz: Option<f64>,
    phase_jump_rad: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ZcdSection {
    positive_level: f64,
    negative_level: f64,
    smoothing: Option<f64>,
    deadline_s: f64,
}

impl Default for ZcdSection {
    fn default() -> Self {
        let d = ZcdOptions::default();
        Self {
            positive_level: d.band.positive_level(),
            negative_level: d.band.negative_level(),
            smoothing: None,
            deadline_s: d.deadline_s,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DetectorName {
    Product,
    Quadrature,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LoopFilterEntry {
    FirstOrder { cutoff_hz: f64 },
    SecondOrder { cutoff_hz: f64 },
    PeriodAverage { periods: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PllSection {
    enabled: bool,
    detector: DetectorName,
    kp: f64,
    ki: f64,
    kd: f64,
    output_limit_hz: f64,
    anti_windup: bool,
    loop_filter: Option<LoopFilterEntry>,
    phase_shift_rad: f64,
    initial_phase_rad: f64,
    lock_band: f64,
    lock_dwell_s: f64,
    min_frequency_hz: f64,
    max_frequency_hz: f64,
    divergence_timeout_s: f64,
}

impl Default for PllSection {
    fn default() -> Self {
        let d = PllConfig::default();
        Self {
            enabled: true,
            detector: DetectorName::Product,
            kp: d.gains.kp,
            ki: d.gains.ki,
            kd: d.gains.kd,
            output_limit_hz: d.output_limit_hz,
            anti_windup: d.anti_windup,
            loop_filter: None,
            phase_shift_rad: d.phase_shift_rad,
            initial_phase_rad: d.initial_phase_rad,
            lock_band: d.lock_band,
            lock_dwell_s: d.lock_dwell_s,
            min_frequency_hz: d.min_frequency_hz,
            max_frequency_hz: d.max_frequency_hz,
            divergence_timeout_s: d.divergence_timeout_s,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SchemeName {
    Bipolar,
    Unipolar,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InverterSection {
    carrier_hz: f64,
    modulation_index: f64,
    dc_bus_volts: f64,
    scheme: SchemeName,
    filter_cutoff_hz: f64,
    analysis_start_s: f64,
    max_order: usize,
}

impl Default for InverterSection {
    fn default() -> Self {
        let d = InverterOptions::default();
        Self {
            carrier_hz: d.spwm.carrier_hz,
            modulation_index: d.spwm.modulation_index,
            dc_bus_volts: d.spwm.dc_bus_volts,
            scheme: SchemeName::Bipolar,
            filter_cutoff_hz: d.filter_cutoff_hz,
            analysis_start_s: d.analysis_start_s,
            max_order: d.max_order,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RecordSection {
    channels: Vec<Channel>,
}

impl Default for RecordSection {
    fn default() -> Self {
        Self {
            channels: vec![Channel::Reference, Channel::ZcdHz],
        }
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let r = self.reference;
        let reference = SignalSpec {
            amplitude: r.amplitude,
            frequency_hz: r.frequency_hz,
            phase_rad: r.phase_rad,
            dc_offset: r.dc_offset,
            harmonics: r
                .harmonics
                .into_iter()
                .map(|h| Harmonic {
                    order: h.order,
                    relative_amplitude: h.relative_amplitude,
                    phase_rad: h.phase_rad,
                })
                .collect(),
            noise_std: r.noise_std,
            seed: self.seed,
        };
        let events = r
            .events
            .into_iter()
            .map(|e| StepEvent {
                at_time_s: e.at_time_s,
                new_frequency_hz: e.new_frequency_hz,
                phase_jump_rad: e.phase_jump_rad,
            })
            .collect();
        let band = HysteresisBand::new(self.zcd.positive_level, self.zcd.negative_level)
            .map_err(core_err("zcd"))?;
        let zcd = ZcdOptions {
            band,
            smoothing: self.zcd.smoothing,
            deadline_s: self.zcd.deadline_s,
        };
        let p = self.pll;
        let pll = p.enabled.then(|| PllConfig {
            loop_filter: match p.loop_filter {
                None => PllConfig::default().loop_filter,
                Some(LoopFilterEntry::FirstOrder { cutoff_hz }) => {
                    LoopFilterConfig::FirstOrder { cutoff_hz }
                }
                Some(LoopFilterEntry::SecondOrder { cutoff_hz }) => {
                    LoopFilterConfig::SecondOrder { cutoff_hz }
                }
                Some(LoopFilterEntry::PeriodAverage { periods }) => {
                    LoopFilterConfig::PeriodAverage { periods }
                }
            },
            gains: PidGains {
                kp: p.kp,
                ki: p.ki,
                kd: p.kd,
            },
            output_limit_hz: p.output_limit_hz,
            anti_windup: p.anti_windup,
            phase_shift_rad: p.phase_shift_rad,
            detector_mode: match p.detector {
                DetectorName::Product => DetectorMode::Product,
                DetectorName::Quadrature => DetectorMode::Quadrature,
            },
            lock_band: p.lock_band,
            lock_dwell_s: p.lock_dwell_s,
            initial_phase_rad: p.initial_phase_rad,
            min_frequency_hz: p.min_frequency_hz,
            max_frequency_hz: p.max_frequency_hz,
            divergence_timeout_s: p.divergence_timeout_s,
        });
        let inverter = self.inverter.map(|i| InverterOptions {
            spwm: SpwmConfig {
                carrier_hz: i.carrier_hz,
                modulation_index: i.modulation_index,
                dc_bus_volts: i.dc_bus_volts,
                scheme: match i.scheme {
                    SchemeName::Bipolar => SpwmScheme::Bipolar,
                    SchemeName::Unipolar => SpwmScheme::Unipolar,
                },
            },
            filter_cutoff_hz: i.filter_cutoff_hz,
            analysis_start_s: i.analysis_start_s,
            max_order: i.max_order,
        });
        Ok(Scenario {
            name: self.name,
            sample_rate_hz: self.timebase.sample_rate_hz,
            duration_s: self.duration_s,
            seed: self.seed,
            reference,
            events,
            zcd,
            pll,
            inverter,
            record: self.record.channels,
        })
    }
}
