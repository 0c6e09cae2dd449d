use std::f64::consts::TAU;

use proptest::prelude::*;

use gridsync_core::signals::{generate, SignalSpec, StepEvent};
use gridsync_core::TimeBase;

/// Naive full DFT magnitude of bin `k`.
fn dft_bin(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let a = TAU * (k * i) as f64 / n;
        re += v * a.cos();
        im -= v * a.sin();
    }
    (re * re + im * im).sqrt()
}

#[test]
fn harmonic_free_spec_is_spectrally_pure() {
    let tb = TimeBase::new(20_000.0).unwrap();
    for (f, cycles) in [(50.0, 2usize), (40.0, 2), (62.5, 5)] {
        let n = (cycles as f64 * 20_000.0 / f) as usize;
        let x = generate(&SignalSpec::sine(f).with_phase(0.9), tb, &[], n).unwrap();
        let fundamental = dft_bin(&x, cycles);
        for k in 0..n / 2 {
            if k == cycles {
                continue;
            }
            let rel_db = 20.0 * (dft_bin(&x, k) / fundamental).max(1e-300).log10();
            assert!(rel_db <= -100.0, "f={f} bin {k}: {rel_db} dB");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identical_inputs_give_identical_samples(
        f in 20.0f64..80.0,
        noise in 0.0f64..0.2,
        seed in any::<u64>(),
        step in 0.01f64..0.05,
        jump in -3.0f64..3.0,
    ) {
        let tb = TimeBase::new(20_000.0).unwrap();
        let spec = SignalSpec::sine(f).with_noise(noise, seed);
        let events = [StepEvent { at_time_s: step, new_frequency_hz: Some(f * 1.1), phase_jump_rad: Some(jump) }];
        let a = generate(&spec, tb, &events, 2000).unwrap();
        let b = generate(&spec, tb, &events, 2000).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn frequency_steps_are_phase_continuous(
        fa in 35.0f64..65.0,
        fb in 35.0f64..65.0,
        amplitude in 0.1f64..2.0,
        at in 0.0f64..0.09,
    ) {
        let tb = TimeBase::new(20_000.0).unwrap();
        let mut spec = SignalSpec::sine(fa);
        spec.amplitude = amplitude;
        let x = generate(&spec, tb, &[StepEvent::frequency(at, fb)], 2000).unwrap();
        let bound = TAU * fa.max(fb) * amplitude * tb.dt();
        for w in x.windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= bound * (1.0 + 1e-9));
        }
    }
}
