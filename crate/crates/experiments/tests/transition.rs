use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;
use std::sync::OnceLock;

use damsim_core::lti_equiv::q_from_impedance;
use damsim_core::modulator::{phase_delay, TransmitterMode, QPSK_PHASES};
use damsim_core::phasor::input_impedance;
use damsim_experiments::bench::Bench;
use damsim_experiments::report::OutputDir;
use damsim_experiments::transition::{charging_rise, run_single_transition, single_transition, target_label, vdc_sweep, Rise, Transition};
use damsim_experiments::ExperimentConfig;
use num_complex::Complex64;

const DELTAS: [f64; 3] = [FRAC_PI_2, PI, 3.0 * FRAC_PI_2];

fn config(file: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)).unwrap().0
}

fn bench() -> &'static Bench {
    static B: OnceLock<Bench> = OnceLock::new();
    B.get_or_init(|| Bench::new(&config("transition.toml")).unwrap())
}

fn runs(mode: TransmitterMode) -> Vec<Transition> {
    DELTAS.iter().map(|&d| single_transition(bench(), mode, d, 40).unwrap()).collect()
}

fn cycles(r: Rise) -> f64 {
    r.seconds().expect("rise reached") * bench().f_c
}

#[test]
fn target_labels_retard_the_phase() {
    for d in DELTAS {
        let k = target_label(d).unwrap();
        assert!((phase_delay(QPSK_PHASES[0], QPSK_PHASES[k]) - d).abs() < 1e-12);
    }
    assert!(target_label(PI / 4.0).is_err());
}

#[test]
fn dc_hold_at_stored_peak_rises_within_a_cycle() {
    for tr in runs(bench().dc_mode(1.0)) {
        let c = cycles(tr.rise);
        assert!(c < 1.0, "{}°: {c}", tr.delta.to_degrees());
        let gap = tr.event - tr.open.unwrap();
        assert!((gap * bench().f_c - tr.delta / TAU).abs() < 1e-9);
    }
}

#[test]
fn open_hold_is_slow_at_quarter_turns() {
    let r: Vec<f64> = runs(TransmitterMode::OcDam).iter().map(|t| cycles(t.rise)).collect();
    assert!(r[0] > 5.0 && r[2] > 5.0, "{r:?}");
    assert!(r[1] < 1.0, "{r:?}");
}

#[test]
fn dc_hold_reduces_off_state_swing() {
    let oc = runs(TransmitterMode::OcDam);
    let dc = runs(bench().dc_mode(1.0));
    for (o, d) in oc.iter().zip(&dc) {
        assert!(o.off_swing() > 3.0 * d.off_swing(), "{} vs {}", o.off_swing(), d.off_swing());
    }
    for t in runs(TransmitterMode::Lti) {
        assert_eq!(t.off_swing(), 0.0);
        assert!(t.open.is_none());
    }
}

#[test]
fn lti_charging_follows_loaded_q() {
    // Step-driven resonator envelope 1 − e^{−t/τ}, τ = 2Q/ω₀: 95% at 3Q/π cycles.
    let mut cfg = config("transition.toml");
    cfg.carrier = Some("resonant".into());
    cfg.source_resistance = Some("matched".into());
    let b = Bench::new(&cfg).unwrap();
    let radiate = b.paths(TransmitterMode::Lti).unwrap().radiate;
    let omega: Vec<f64> = (-2..=2).map(|k| TAU * b.f_c * (1.0 + k as f64 * 1e-4)).collect();
    let z: Vec<Complex64> = omega
        .iter()
        .map(|w| input_impedance(&b.netlist, &radiate, &b.source, w / TAU).unwrap() + b.series_resistance())
        .collect();
    let q = q_from_impedance(&omega, &z, TAU * b.f_c, 2.0 * b.series_resistance()).unwrap();
    let rise = charging_rise(&b).unwrap().seconds().unwrap() * b.f_c;
    let want = 3.0 * q / PI;
    assert!((rise / want - 1.0).abs() < 0.1, "{rise} vs {want} (Q = {q})");
}

#[test]
fn sweep_reports_every_point_and_reference() {
    let mut cfg = config("vdc_sweep.toml");
    cfg.vdc_ratios = vec![0.0, 1.0];
    cfg.settle_cycles = 30;
    let s = vdc_sweep(&cfg).unwrap();
    assert_eq!(s.points.len(), 6);
    assert_eq!(s.open_circuit.len(), 3);
    assert_eq!(s.lti_transition.len(), 3);
    for d in DELTAS {
        let at_one = s.rise(1.0, d).unwrap().seconds().unwrap() / s.period;
        assert!(at_one < 1.0, "{at_one}");
        assert!(s.rise(0.0, d).is_some());
    }
    assert!(s.rise(0.5, FRAC_PI_2).is_none());
}

#[test]
fn run_writes_traces_and_rise_table() {
    let mut cfg = config("transition.toml");
    cfg.transitions = vec!["90deg".into()];
    cfg.settle_cycles = 20;
    let dir = tempfile::tempdir().unwrap();
    let mut out = OutputDir::create(dir.path()).unwrap();
    let metrics = run_single_transition(&cfg, &mut out).unwrap();
    assert!(metrics.iter().any(|(k, _)| k == "rise_cycles.dc-dam-1.00.90"));
    let mut rdr = csv::Reader::from_path(dir.path().join("rise_times.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[2][0], "dc-dam");
    let mut rdr = csv::Reader::from_path(dir.path().join("transition_oc-dam_90.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 6);
    // Before the open instant the overlay and the simulation coincide.
    let first = rdr.records().next().unwrap().unwrap();
    let (v_c, ideal): (f64, f64) = (first[1].parse().unwrap(), first[4].parse().unwrap());
    assert!((v_c - ideal).abs() < 1e-9, "{v_c} {ideal}");
}
