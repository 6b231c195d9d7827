use std::f64::consts::{FRAC_PI_2, PI, TAU};

use damsim_core::dsp::*;
use damsim_core::error::Error;
use damsim_core::sim::Waveform;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const F_C: f64 = 28.38e6;
const DT: f64 = 1.0 / F_C / 32.0;

fn tone(freq: f64, amp: f64, phase: f64, n: usize) -> Waveform {
    let s = (0..n).map(|i| amp * (TAU * freq * i as f64 * DT + phase).cos()).collect();
    Waveform::new("x", 0.0, DT, s).unwrap()
}

/// Direct DTFT of the taps at `f`.
fn response(h: &[f64], f: f64, fs: f64) -> f64 {
    h.iter()
        .enumerate()
        .map(|(k, v)| Complex64::from_polar(*v, -TAU * f / fs * k as f64))
        .sum::<Complex64>()
        .norm()
}

fn interior(iq: &IqSignal) -> &[Complex64] {
    let n = iq.len();
    &iq.samples[n / 3..2 * n / 3]
}

#[test]
fn kaiser_design_meets_stopband() {
    let spec = LowpassSpec::for_carrier(F_C);
    let fs = 1.0 / DT;
    let h = kaiser_lowpass(&spec, fs).unwrap();
    assert_eq!(h.len() % 2, 1);
    assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    let stop = spec.cutoff + spec.transition / 2.0;
    let pass = spec.cutoff - spec.transition / 2.0;
    for k in 0..400 {
        let f = stop + k as f64 * (fs / 2.0 - stop) / 400.0;
        assert!(response(&h, f, fs) < 1e-3, "stopband {f}: {}", response(&h, f, fs));
    }
    for k in 0..100 {
        let f = k as f64 * pass / 100.0;
        assert!((response(&h, f, fs) - 1.0).abs() < 2e-3);
    }
}

#[test]
fn carrier_maps_to_unit_phasor() {
    let spec = LowpassSpec::for_carrier(F_C);
    for (phase, want) in [(0.0, Complex64::new(1.0, 0.0)), (FRAC_PI_2, Complex64::new(0.0, 1.0))] {
        let iq = downconvert(&tone(F_C, 1.0, phase, 6000), F_C, &spec).unwrap();
        for z in interior(&iq) {
            assert!((z - want).norm() < 2e-3, "{z} vs {want}");
        }
    }
}

#[test]
fn parasitic_ring_tone_is_rejected() {
    // Ring frequency of the reference OFF network, ω₁/2π.
    let f_ring = 3.21997e8 / TAU;
    let spec = LowpassSpec::for_carrier(F_C);
    let iq = downconvert(&tone(f_ring, 1.0, 0.3, 8000), F_C, &spec).unwrap();
    let h = kaiser_lowpass(&spec, 1.0 / DT).unwrap();
    let oracle = response(&h, f_ring - F_C, 1.0 / DT) + response(&h, f_ring + F_C, 1.0 / DT);
    let peak = interior(&iq).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    assert!(20.0 * peak.log10() < -40.0, "leakage {} dB", 20.0 * peak.log10());
    assert!(peak <= oracle * (1.0 + 1e-9));
}

#[test]
fn cutoff_above_carrier_is_aliasing() {
    let spec = LowpassSpec { cutoff: F_C, transition: 0.1 * F_C, attenuation_db: 60.0 };
    assert!(matches!(downconvert(&tone(F_C, 1.0, 0.0, 100), F_C, &spec), Err(Error::Aliasing { .. })));
    let slow = Waveform::new("x", 0.0, 1.0 / (3.0 * F_C), vec![0.0; 100]).unwrap();
    assert!(matches!(downconvert(&slow, F_C, &LowpassSpec::for_carrier(F_C)), Err(Error::Validation(_))));
}

/// Piecewise-constant ideal QPSK baseband with `per` samples per symbol.
fn ideal_qpsk(labels: &[usize], per: usize, amp: f64) -> (IqSignal, Vec<f64>, f64) {
    let dt = 1e-9;
    let samples = labels
        .iter()
        .flat_map(|&l| std::iter::repeat_n(Complex64::from_polar(amp, PI / 4.0 + l as f64 * FRAC_PI_2), per))
        .collect();
    let starts = (0..labels.len()).map(|k| (k * per) as f64 * dt).collect();
    (IqSignal { start: 0.0, sample_interval: dt, carrier: F_C, samples }, starts, per as f64 * dt)
}

fn labels(n: usize) -> Vec<usize> {
    (0..n).map(|k| (k * 7 + k / 3) % 4).collect()
}

#[test]
fn ideal_constellation_means_on_unit_circle() {
    let l = labels(40);
    let (iq, starts, ts) = ideal_qpsk(&l, 16, 3.0);
    let c = sample_constellation(&iq, &starts, ts, &l).unwrap();
    for (k, m) in c.means().iter().enumerate() {
        let want = Complex64::from_polar(1.0, PI / 4.0 + k as f64 * FRAC_PI_2);
        assert!((m.unwrap() - want).norm() < 1e-12);
    }
    assert_eq!(evm_db(&c), EVM_FLOOR_DB);
    assert!(cluster_sd(&c) < 1e-12);
}

/// One-pole lowpass with time constant `tau` samples.
fn smoothed(iq: &IqSignal, tau: f64) -> IqSignal {
    let a = 1.0 - (-1.0 / tau).exp();
    let mut y = Complex64::new(0.0, 0.0);
    let samples = iq
        .samples
        .iter()
        .map(|x| {
            y += (x - y) * a;
            y
        })
        .collect();
    IqSignal { samples, ..iq.clone() }
}

#[test]
fn chosen_offset_is_exhaustive_argmax_and_stable_under_oversampling() {
    let l = labels(60);
    let (iq, starts, ts) = ideal_qpsk(&l, 20, 1.0);
    let iq = smoothed(&iq, 6.0);
    let c = sample_constellation(&iq, &starts, ts, &l).unwrap();
    let scores: Vec<f64> = (0..20)
        .map(|k| mean_cluster_separation(&sample_at(&iq, &starts, &l, k as f64 * iq.sample_interval).unwrap()))
        .collect();
    let best = scores.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(mean_cluster_separation(&c.points), best);

    // Same symbol period at twice the sample rate.
    let (iq2, starts2, ts2) = ideal_qpsk(&l, 40, 1.0);
    let mut iq2 = smoothed(&iq2, 12.0);
    iq2.sample_interval /= 2.0;
    let starts2: Vec<f64> = starts2.iter().map(|t| t / 2.0).collect();
    let ts2 = ts2 / 2.0;
    let c2 = sample_constellation(&iq2, &starts2, ts2, &l).unwrap();
    assert!((c2.offset - c.offset).abs() <= iq.sample_interval + 1e-15);
}

#[test]
fn evm_of_ten_percent_ring_is_minus_twenty_db() {
    let mut points = Vec::new();
    for k in 0..400 {
        let label = k % 4;
        let mu = Complex64::from_polar(1.0, PI / 4.0 + label as f64 * FRAC_PI_2);
        // Error phases evenly spread per cluster so the cluster mean is exact.
        let phi = TAU * (k / 4) as f64 / 100.0;
        points.push(ConstellationPoint { symbol: k, label, value: mu * (1.0 + 0.1 * Complex64::from_polar(1.0, phi)) });
    }
    let c = Constellation::from_points(points, 0.0).unwrap();
    assert!((evm_db(&c) + 20.0).abs() < 1e-9, "{}", evm_db(&c));
}

#[test]
fn gaussian_spread_recovered_by_sd() {
    let sigma = 0.08;
    let normal = Normal::new(0.0, sigma / 2f64.sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points = (0..10_000)
        .map(|k| {
            let label = k % 4;
            let mu = Complex64::from_polar(1.0, PI / 4.0 + label as f64 * FRAC_PI_2);
            let n = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            ConstellationPoint { symbol: k, label, value: mu + n }
        })
        .collect();
    let c = Constellation::from_points(points, 0.0).unwrap();
    assert!((cluster_sd(&c) / sigma - 1.0).abs() < 0.05, "{}", cluster_sd(&c));
}

#[test]
fn too_few_points_or_labels() {
    let l = vec![0, 0, 0];
    let (iq, starts, ts) = ideal_qpsk(&l, 4, 1.0);
    assert!(matches!(sample_constellation(&iq, &starts, ts, &l), Err(Error::InsufficientData(_))));
    let p = vec![
        ConstellationPoint { symbol: 0, label: 0, value: Complex64::new(1.0, 1.0) },
        ConstellationPoint { symbol: 1, label: 1, value: Complex64::new(-1.0, 1.0) },
    ];
    assert!(matches!(Constellation::from_points(p, 0.0), Err(Error::InsufficientData(_))));
}

#[test]
fn symbol_power_normalization() {
    let l = labels(20);
    let (iq, starts, ts) = ideal_qpsk(&l, 8, 0.7);
    let c = sample_constellation(&iq, &starts, ts, &l).unwrap();
    let reference = mean_symbol_power(&c);
    assert!((avg_symbol_power(&c, reference).unwrap() - 1.0).abs() < 1e-15);
    let (iq2, _, _) = ideal_qpsk(&l, 8, 1.4);
    let (iq_ref2, _, _) = ideal_qpsk(&l, 8, 1.4);
    let c2 = sample_constellation(&iq2, &starts, ts, &l).unwrap();
    let r2 = mean_symbol_power(&sample_constellation(&iq_ref2, &starts, ts, &l).unwrap());
    assert!((avg_symbol_power(&c2, r2).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(avg_symbol_power(&c, 0.0), Err(Error::Reference));
}

#[test]
fn exponential_rise_time() {
    let tau = 40e-9;
    let dt = 0.5e-9;
    let t_event = 100e-9;
    let samples = (0..4000)
        .map(|i| {
            let t = i as f64 * dt - t_event;
            if t <= 0.0 { 0.0 } else { 2.0 * (1.0 - (-t / tau).exp()) }
        })
        .collect();
    let env = Waveform::new("env", 0.0, dt, samples).unwrap();
    let r = rise_time_95(&env, t_event, 2.0, 35e-9).unwrap();
    assert!((r - tau * 20f64.ln()).abs() <= dt, "{r}");
    match rise_time_95(&env, t_event, 3.0, 35e-9) {
        Err(Error::Timeout { max_fraction }) => assert!((max_fraction - 2.0 / 3.0).abs() < 1e-6),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rise_time_requires_a_sustained_crossing() {
    let dt = 1.0;
    let mut s = vec![0.0; 50];
    s[10] = 1.0;
    for v in &mut s[30..] {
        *v = 1.0;
    }
    let env = Waveform::new("env", 0.0, dt, s).unwrap();
    assert_eq!(rise_time_95(&env, 5.0, 1.0, 5.0).unwrap(), 25.0);
}

#[test]
fn awgn_is_seeded_and_sized() {
    let iq = IqSignal { start: 0.0, sample_interval: 1.0, carrier: 1.0, samples: vec![Complex64::new(1.0, 0.0); 20_000] };
    let a = add_awgn(&iq, 20.0, 3).unwrap();
    assert_eq!(a, add_awgn(&iq, 20.0, 3).unwrap());
    let noise = a.samples.iter().map(|z| (z - 1.0).norm_sqr()).sum::<f64>() / 20_000.0;
    assert!((noise / 0.01 - 1.0).abs() < 0.05);
}

#[test]
fn exports() {
    let l = labels(8);
    let (iq, starts, ts) = ideal_qpsk(&l, 4, 1.0);
    let c = sample_constellation(&iq, &starts, ts, &l).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("symbol_index,label,re,im"));
    assert_eq!(text.lines().count(), 9);
    let m = SignalMetrics { evm_db: -12.5, sd: 0.1, avg_power: Some(1.5), rise_time: None };
    let mut buf = Vec::new();
    m.write(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "evm_db=-12.5\nsd=0.1\navg_power=1.5\n");
}

fn noisy_constellation(seed: u64) -> (IqSignal, Vec<f64>, f64, Vec<usize>) {
    let l = labels(48);
    let (iq, starts, ts) = ideal_qpsk(&l, 12, 1.0);
    let iq = add_awgn(&smoothed(&iq, 3.0), 18.0, seed).unwrap();
    (iq, starts, ts, l)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_invariant_under_rotation(seed in 0u64..1000, phi in -PI..PI) {
        let (iq, starts, ts, l) = noisy_constellation(seed);
        let a = sample_constellation(&iq, &starts, ts, &l).unwrap();
        let b = sample_constellation(&iq.scaled(Complex64::from_polar(1.0, phi)), &starts, ts, &l).unwrap();
        prop_assert!((evm_db(&a) - evm_db(&b)).abs() <= 1e-12 * evm_db(&a).abs());
        prop_assert!((cluster_sd(&a) - cluster_sd(&b)).abs() <= 1e-12 * cluster_sd(&a));
        prop_assert!((mean_symbol_power(&a) - mean_symbol_power(&b)).abs() <= 1e-12 * mean_symbol_power(&a));
    }

    #[test]
    fn evm_and_sd_invariant_under_scaling(seed in 0u64..1000, k in 0.01f64..100.0) {
        let (iq, starts, ts, l) = noisy_constellation(seed);
        let a = sample_constellation(&iq, &starts, ts, &l).unwrap();
        let b = sample_constellation(&iq.scaled(Complex64::new(k, 0.0)), &starts, ts, &l).unwrap();
        prop_assert!((evm_db(&a) - evm_db(&b)).abs() <= 1e-12 * evm_db(&a).abs());
        prop_assert!((cluster_sd(&a) - cluster_sd(&b)).abs() <= 1e-12 * cluster_sd(&a));
    }
}

#[test]
fn analytic_envelope_tracks_amplitude_steps() {
    let f = 10e6;
    let dt = 1.0 / (64.0 * f);
    let n = 64 * 200;
    // Amplitude 1 for 100 cycles, then 0.5 with a 90° phase jump.
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            if i < n / 2 { (TAU * f * t).cos() } else { 0.5 * (TAU * f * t + FRAC_PI_2).cos() }
        })
        .collect();
    let w = Waveform::new("x", 0.0, dt, samples).unwrap();
    let env = analytic_envelope(&w).unwrap();
    assert_eq!(env.len(), n);
    // Away from the step and the record ends the envelope is the amplitude.
    for i in (10 * 64..40 * 64).chain(60 * 64..90 * 64) {
        assert!((env.samples[i] - 1.0).abs() < 0.02, "{i}: {}", env.samples[i]);
    }
    for i in (110 * 64..140 * 64).chain(160 * 64..190 * 64) {
        assert!((env.samples[i] - 0.5).abs() < 0.01, "{i}: {}", env.samples[i]);
    }
    // The step is resolved within a carrier cycle.
    let t = rise_time_95(&env, 0.0, 1.0, 0.0).unwrap();
    assert_eq!(t, 0.0);
    assert!(env.samples[n / 2 + 64] < 0.55);
}
