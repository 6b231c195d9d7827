use damsim_experiments::fit::{fit_damped_sinusoid, FitOutcome, MAX_REL_RESIDUAL};
use damsim_experiments::ExpError;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DT: f64 = 1.0 / 28.38e6 / 64.0;

fn damped(n: usize, t0: f64, c: f64, a: f64, b: f64, alpha: f64, omega: f64) -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = (0..n).map(|i| t0 + i as f64 * DT).collect();
    let y = t
        .iter()
        .map(|&ti| {
            let tau = ti - t0;
            c + (-alpha * tau).exp() * (a * (omega * tau).cos() + b * (omega * tau).sin())
        })
        .collect();
    (t, y)
}

fn oscillation(o: FitOutcome) -> damsim_experiments::fit::DampedFit {
    match o {
        FitOutcome::Oscillation(f) => f,
        other => panic!("expected an oscillation, got {other:?}"),
    }
}

#[test]
fn exact_trace_recovers_parameters() {
    let (omega, alpha) = (3.22e8, 2.83e6);
    let (t, y) = damped(960, 1.7e-7, 0.05, 0.3, -0.8, alpha, omega);
    let f = oscillation(fit_damped_sinusoid(&t, &y, 1e-3).unwrap());
    assert!((f.omega - omega).abs() < 1e-9 * omega, "{}", f.omega);
    assert!((f.alpha - alpha).abs() < 1e-7 * alpha, "{}", f.alpha);
    assert!((f.offset - 0.05).abs() < 1e-9);
    assert!((f.amplitude - 0.3f64.hypot(0.8)).abs() < 1e-9);
    assert!(f.rel_residual < 1e-8);
    assert!((f.frequency() - omega / std::f64::consts::TAU).abs() < 1e-3);
}

#[test]
fn noisy_trace_lands_within_reported_uncertainty() {
    let (omega, alpha) = (3.22e8, 2.83e6);
    let (t, mut y) = damped(960, 0.0, 0.0, 1.0, 0.0, alpha, omega);
    let noise = Normal::new(0.0, 0.005).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for v in &mut y {
        *v += noise.sample(&mut rng);
    }
    let f = oscillation(fit_damped_sinusoid(&t, &y, 1e-3).unwrap());
    assert!(f.omega_sd > 0.0 && f.alpha_sd > 0.0);
    assert!((f.omega - omega).abs() < 4.0 * f.omega_sd, "{} ± {}", f.omega, f.omega_sd);
    assert!((f.alpha - alpha).abs() < 4.0 * f.alpha_sd, "{} ± {}", f.alpha, f.alpha_sd);
    assert!(f.rel_residual < MAX_REL_RESIDUAL);
}

#[test]
fn flat_or_monotone_traces_do_not_oscillate() {
    let t: Vec<f64> = (0..500).map(|i| i as f64 * DT).collect();
    let flat = vec![1.0; 500];
    assert!(matches!(fit_damped_sinusoid(&t, &flat, 1e-3).unwrap(), FitOutcome::NoOscillation { .. }));
    let decay: Vec<f64> = t.iter().map(|x| (-x * 1e6).exp()).collect();
    assert!(matches!(fit_damped_sinusoid(&t, &decay, 1e-3).unwrap(), FitOutcome::NoOscillation { .. }));
    // An oscillation below the threshold counts as flat.
    let (t, tiny) = damped(500, 0.0, 1.0, 1e-5, 0.0, 1e6, 3.2e8);
    match fit_damped_sinusoid(&t, &tiny, 1e-3).unwrap() {
        FitOutcome::NoOscillation { peak_to_peak } => assert!(peak_to_peak < 1e-3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn model_mismatch_is_a_fit_error() {
    // Two equal tones an octave apart cannot be one damped sinusoid.
    let t: Vec<f64> = (0..960).map(|i| i as f64 * DT).collect();
    let y: Vec<f64> = t.iter().map(|x| (3.2e8 * x).cos() + (6.4e8 * x).cos()).collect();
    let e = fit_damped_sinusoid(&t, &y, 1e-3).unwrap_err();
    match e {
        ExpError::Fit { residual } => assert!(residual > MAX_REL_RESIDUAL, "{residual}"),
        other => panic!("{other}"),
    }
}

#[test]
fn short_or_mismatched_input_rejected() {
    assert!(fit_damped_sinusoid(&[0.0; 8], &[0.0; 8], 1e-3).is_err());
    assert!(fit_damped_sinusoid(&[0.0; 20], &[0.0; 19], 1e-3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recovers_random_damped_tones(
        omega in 1.5e8f64..4.5e8,
        alpha in 0.0f64..1.5e7,
        phase in -3.0f64..3.0,
        amp in 0.1f64..10.0,
        offset in -1.0f64..1.0,
    ) {
        let (t, y) = damped(768, 2e-8, offset, amp * phase.cos(), amp * phase.sin(), alpha, omega);
        let f = oscillation(fit_damped_sinusoid(&t, &y, 1e-3 * amp).unwrap());
        prop_assert!((f.omega - omega).abs() <= 1e-6 * omega, "{} vs {}", f.omega, omega);
        prop_assert!((f.alpha - alpha).abs() <= 1e-6 * omega, "{} vs {}", f.alpha, alpha);
        prop_assert!((f.amplitude - amp).abs() <= 1e-6 * amp);
    }
}
