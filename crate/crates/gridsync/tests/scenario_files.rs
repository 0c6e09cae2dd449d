use std::path::PathBuf;

use gridsync::scenario::{Channel, Scenario, ScenarioError};
use gridsync_core::pll::{LoopFilterConfig, PllConfig};

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn message(text: &str) -> String {
    match Scenario::from_toml_str(text) {
        Ok(_) => panic!("expected an error for\n{text}"),
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!(": {s}"));
                src = s.source();
            }
            msg
        }
    }
}

const BASE: &str = "duration_s = 0.5\n[reference]\nfrequency_hz = 50.0\n";

#[test]
fn bundled_scenarios_load() {
    for name in [
        "fig2_freq50",
        "fig3_freq42p88",
        "fig5_lock_start",
        "fig6_locked",
        "spwm_vs_square",
    ] {
        let s = Scenario::load(&bundled(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(s.name, name);
    }
}

#[test]
fn minimal_file_takes_library_defaults() {
    let s = Scenario::from_toml_str(BASE).unwrap();
    assert_eq!(s.sample_rate_hz, 20_000.0);
    assert_eq!(s.reference.amplitude, 1.0);
    assert_eq!(s.pll, Some(PllConfig::default()));
    assert!(s.inverter.is_none());
    assert_eq!(s.zcd.deadline_s, 0.5);
    assert_eq!(s.record, vec![Channel::Reference, Channel::ZcdHz]);
}

#[test]
fn sections_map_onto_library_types() {
    let s = Scenario::from_toml_str(
        r#"
        name = "x"
        duration_s = 1.0
        seed = 9
        [timebase]
        sample_rate_hz = 40000
        [reference]
        frequency_hz = 45.0
        harmonics = [{ order = 3, relative_amplitude = 0.05 }]
        [[reference.events]]
        at_time_s = 0.5
        phase_jump_rad = 0.3
        [zcd]
        positive_level = 0.2
        smoothing = 0.5
        [pll]
        detector = "quadrature"
        ki = 20.0
        loop_filter = { kind = "second_order", cutoff_hz = 5.0 }
        [record]
        channels = ["pv", "f_cmd", "nco_phase"]
        "#,
    )
    .unwrap();
    assert_eq!(s.seed, 9);
    assert_eq!(s.reference_spec().seed, 9);
    assert_eq!(s.reference.harmonics.len(), 1);
    assert_eq!(s.events[0].phase_jump_rad, Some(0.3));
    assert_eq!(s.zcd.band.positive_level(), 0.2);
    assert_eq!(s.zcd.band.negative_level(), -0.1);
    let pll = s.pll.unwrap();
    assert_eq!(pll.gains.ki, 20.0);
    assert_eq!(pll.loop_filter, LoopFilterConfig::SecondOrder { cutoff_hz: 5.0 });
    assert_eq!(s.record[1].name(), "f_cmd");
}

#[test]
fn unknown_keys_are_errors() {
    let cases = [
        ("top level", format!("{BASE}sed = 3\n"), "sed"),
        ("reference", "duration_s = 0.5\n[reference]\nfrequency_hz = 50.0\nfreqency = 3\n".to_string(), "freqency"),
        ("pll", format!("{BASE}[pll]\nkpp = 1.0\n"), "kpp"),
        ("loop filter", format!("{BASE}[pll]\nloop_filter = {{ kind = \"period_average\", cutoff_hz = 3.0 }}\n"), "cutoff_hz"),
        ("zcd", format!("{BASE}[zcd]\nhysteresis = 0.1\n"), "hysteresis"),
        ("inverter", format!("{BASE}[inverter]\ncarrier = 5000\n"), "carrier"),
        ("event", format!("{BASE}[[reference.events]]\nat_time_s = 0.1\nfreq = 3.0\n"), "freq"),
        ("section", format!("{BASE}[plot]\nwidth = 3\n"), "plot"),
    ];
    for (what, text, key) in cases {
        let err = Scenario::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)), "{what}: {err}");
        let msg = message(&text);
        assert!(msg.contains(key), "{what}: {msg}");
    }
}

#[test]
fn unknown_channel_and_enum_names_are_errors() {
    assert!(message(&format!("{BASE}[record]\nchannels = [\"voltage\"]\n")).contains("voltage"));
    assert!(message(&format!("{BASE}[pll]\ndetector = \"mixer\"\n")).contains("mixer"));
    assert!(message(&format!("{BASE}[inverter]\nscheme = \"tri\"\n")).contains("tri"));
}

#[test]
fn validation_names_the_violated_constraint() {
    let cases = [
        ("duration_s = 0.0\n[reference]\nfrequency_hz = 50.0\n".to_string(), "duration_s"),
        (format!("{BASE}[timebase]\nsample_rate_hz = -1.0\n"), "sample_rate_hz"),
        ("duration_s = 0.5\n[reference]\nfrequency_hz = 50.0\namplitude = 0.1\n".to_string(), "below the reference amplitude"),
        ("duration_s = 0.5\n[reference]\nfrequency_hz = 50.0\ndc_offset = 0.2\n".to_string(), "dc_offset"),
        (format!("{BASE}[zcd]\npositive_level = -0.1\n"), "negative < 0 < positive"),
        (format!("{BASE}[zcd]\nsmoothing = 1.5\n"), "smoothing"),
        (format!("{BASE}[zcd]\ndeadline_s = 0.0\n"), "deadline_s"),
        (format!("{BASE}[pll]\nlock_band = 0.0\n"), "lock band"),
        (format!("{BASE}[pll]\nmin_frequency_hz = 55.0\n"), "outside the pll range"),
        (format!("{BASE}[pll]\nphase_shift_rad = 7.0\n"), "phase shift"),
        (format!("{BASE}[pll]\nenabled = false\n[record]\nchannels = [\"pv\"]\n"), "needs [pll]"),
        (format!("{BASE}[record]\nchannels = [\"inverter\"]\n"), "needs an [inverter]"),
        (format!("{BASE}[record]\nchannels = [\"pv\", \"pv\"]\n"), "twice"),
        (format!("{BASE}[inverter]\ncarrier_hz = 1000\n"), "20x"),
        (format!("{BASE}[inverter]\ncarrier_hz = 6000\n"), "4 samples"),
        (format!("{BASE}[inverter]\nmodulation_index = 1.2\n"), "modulation index"),
        (format!("{BASE}[inverter]\nmax_order = 0\n"), "max_order"),
        (format!("{BASE}[inverter]\nanalysis_start_s = 0.5\n"), "analysis_start_s"),
        (format!("{BASE}[pll]\ndetector = \"quadrature\"\n[inverter]\n"), "product"),
        (format!("{BASE}[[reference.events]]\nat_time_s = 0.3\nnew_frequency_hz = 50.0\n[[reference.events]]\nat_time_s = 0.2\nnew_frequency_hz = 49.0\n"), "reference.events"),
        (format!("{BASE}[[reference.events]]\nat_time_s = 0.3\nnew_frequency_hz = 90.0\n"), "outside the pll range"),
    ];
    for (text, needle) in cases {
        let msg = message(&text);
        assert!(msg.contains(needle), "expected `{needle}` in: {msg}");
    }
}

#[test]
fn zero_amplitude_reference_passes_validation() {
    let s = Scenario::from_toml_str("duration_s = 1.0\n[reference]\namplitude = 0.0\nfrequency_hz = 50.0\n");
    assert!(s.is_ok());
}
