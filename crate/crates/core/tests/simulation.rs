use std::f64::consts::{PI, TAU};

use damsim_core::circuit::{assemble, CircuitState, StateSpaceModel};
use damsim_core::netlist::{Netlist, SourceWaveform, SwitchConfiguration, SwitchPosition};
use damsim_core::phasor::{netlist_steady_state, peak_times, steady_state_phasor};
use damsim_core::presets;
use damsim_core::sim::{simulate, write_waveforms_csv, SimOptions, SourceDrive, SwitchEvent, SwitchSchedule};
use damsim_core::Error;
use nalgebra::DVector;
use num_complex::Complex64;

const F_C: f64 = 28.38e6;

fn on(n: &Netlist) -> SwitchConfiguration {
    n.uniform_configuration(SwitchPosition::On)
}

fn off(n: &Netlist) -> SwitchConfiguration {
    n.uniform_configuration(SwitchPosition::Off)
}

/// Dense fixed-step RK4 on `ż = A z + B u + B_dot u̇` with plain arrays.
struct Rk4 {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    bd: Vec<f64>,
}

impl Rk4 {
    fn new(m: &StateSpaceModel) -> Self {
        let n = m.order();
        let a = (0..n * n).map(|k| m.a[(k / n, k % n)]).collect();
        let b = (0..n).map(|i| m.b[(i, 0)]).collect();
        let bd = (0..n).map(|i| m.b_dot[(i, 0)]).collect();
        Rk4 { n, a, b, bd }
    }

    fn deriv(&self, z: &[f64], u: f64, du: f64, out: &mut [f64]) {
        for (i, (o, row)) in out.iter_mut().zip(self.a.chunks_exact(self.n)).enumerate() {
            *o = self.b[i] * u + self.bd[i] * du + row.iter().zip(z).map(|(a, x)| a * x).sum::<f64>();
        }
    }

    fn step(&self, z: &mut [f64], t: f64, h: f64, src: &dyn Fn(f64) -> (f64, f64)) {
        let n = self.n;
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (u, du) = src(t);
        self.deriv(z, u, du, &mut k1);
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * h * k1[i];
        }
        let (u, du) = src(t + 0.5 * h);
        self.deriv(&tmp, u, du, &mut k2);
        for i in 0..n {
            tmp[i] = z[i] + 0.5 * h * k2[i];
        }
        self.deriv(&tmp, u, du, &mut k3);
        for i in 0..n {
            tmp[i] = z[i] + h * k3[i];
        }
        let (u, du) = src(t + h);
        self.deriv(&tmp, u, du, &mut k4);
        for i in 0..n {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

#[test]
fn exact_propagation_matches_fixed_step_oracle() {
    let net = presets::reference_dam().unwrap();
    let t_c = 1.0 / F_C;
    let dt = t_c / 64.0;
    let (e1, e2, end) = (64usize, 112usize, 160usize);
    let schedule = SwitchSchedule {
        initial: on(&net),
        events: vec![
            SwitchEvent { time: e1 as f64 * dt, configuration: off(&net) },
            SwitchEvent { time: e2 as f64 * dt, configuration: on(&net) },
        ],
    };
    let mut opts = SimOptions::new(end as f64 * dt, dt);
    opts.probes = Some(vec!["v_a".into(), "v_rad".into()]);
    let out = simulate(&net, &schedule, &SourceDrive::new(), None, &opts).unwrap();

    let m_on = assemble(&net, &on(&net)).unwrap();
    let m_off = assemble(&net, &off(&net)).unwrap();
    let lam_max = [&m_on, &m_off]
        .iter()
        .flat_map(|m| m.a.complex_eigenvalues().iter().map(|l| l.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let h0 = 1.0 / lam_max / 1000.0;
    let sub = (dt / h0).ceil() as usize;
    let h = dt / sub as f64;
    let w = TAU * F_C;
    let src = |t: f64| ((w * t).cos(), -w * (w * t).sin());

    let mut expect_a = Vec::new();
    let mut expect_r = Vec::new();
    let segments = [(0usize, e1, &m_on), (e1, e2, &m_off), (e2, end, &m_on)];
    let mut carried: Option<CircuitState> = None;
    for (s0, s1, model) in segments {
        let u0 = DVector::from_element(1, src(s0 as f64 * dt).0);
        let mut z: Vec<f64> = match &carried {
            None => vec![0.0; model.order()],
            Some(cs) => model.state_vector(cs, &u0).iter().copied().collect(),
        };
        let rk = Rk4::new(model);
        let (ca, da) = model.voltage_rows("a", "0").unwrap();
        let (cr, dr) = model.voltage_rows("b", "0").unwrap();
        for k in s0..s1 {
            let t = k as f64 * dt;
            if k > s0 || s0 == 0 {
                let u = src(t).0;
                let zz = DVector::from_column_slice(&z);
                expect_a.push(ca.dot(&zz) + da[0] * u);
                expect_r.push(cr.dot(&zz) + dr[0] * u);
            }
            for j in 0..sub {
                rk.step(&mut z, t + j as f64 * h, h, &src);
            }
        }
        let t1 = s1 as f64 * dt;
        let u1 = DVector::from_element(1, src(t1).0);
        // The boundary sample is taken before the event; probes here are continuous.
        let zz = DVector::from_column_slice(&z);
        expect_a.push(ca.dot(&zz) + da[0] * u1[0]);
        expect_r.push(cr.dot(&zz) + dr[0] * u1[0]);
        carried = Some(model.circuit_state(t1, &DVector::from_column_slice(&z), &u1));
    }

    for (label, expect) in [("v_a", &expect_a), ("v_rad", &expect_r)] {
        let got = &out.waveform(label).unwrap().samples;
        assert_eq!(got.len(), expect.len());
        let scale = expect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = got.iter().zip(expect.iter()).fold(0.0f64, |m, (g, e)| m.max((g - e).abs())) / scale;
        assert!(err < 1e-6, "{label}: normalized error {err:e}");
    }
}

#[test]
fn dc_drive_settles_with_no_radiated_voltage() {
    let net = presets::reference_dam().unwrap();
    let mut drive = SourceDrive::new();
    drive.insert("vcw".into(), SourceWaveform::Dc { level: 1.0 });
    let mut opts = SimOptions::new(8e-6, 1e-9);
    opts.record_from = Some(7e-6);
    let out = simulate(&net, &SwitchSchedule::constant(on(&net)), &drive, None, &opts).unwrap();
    for w in &out.waveforms {
        let (lo, hi) = w.samples.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(hi - lo < 1e-9, "{} not constant: {lo} .. {hi}", w.label);
    }
    let v_rad = out.waveform("v_rad").unwrap();
    assert!(v_rad.samples.iter().all(|v| v.abs() < 1e-9));
    // Capacitors block DC, so the terminal settles to the source level.
    let v_a = out.waveform("v_a").unwrap();
    assert!((v_a.samples[0] - 1.0).abs() < 1e-9);
}

/// Least-squares fit of `c0 + c cos(ωt) + s sin(ωt)`; returns the phasor `c − js`.
fn fit_phasor(t: &[f64], y: &[f64], omega: f64) -> Complex64 {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let r = nalgebra::Vector3::new(1.0, (omega * ti).cos(), (omega * ti).sin());
        ata += r * r.transpose();
        aty += r * yi;
    }
    let c = ata.lu().solve(&aty).unwrap();
    Complex64::new(c[1], -c[2])
}

#[test]
fn phasor_matches_long_run_simulation() {
    let net = presets::reference_dam().unwrap();
    let model = assemble(&net, &on(&net)).unwrap();
    let ss = netlist_steady_state(&net, &on(&net), "vcw").unwrap();
    let alpha_min = model.a.complex_eigenvalues().iter().map(|l| -l.re).fold(f64::MAX, f64::min);
    // 50 time constants of the slowest ON-state mode.
    let t_end = 50.0 / alpha_min;
    let dt = 1.0 / F_C / 64.0;
    let mut opts = SimOptions::new(t_end, dt);
    opts.record_from = Some(t_end - 4.0 / F_C);
    let out = simulate(&net, &SwitchSchedule::constant(on(&net)), &SourceDrive::new(), None, &opts).unwrap();
    for probe in ["v_a", "v_rad", "v_C"] {
        let w = out.waveform(probe).unwrap();
        let t: Vec<f64> = (0..w.len()).map(|i| w.time(i)).collect();
        let fit = fit_phasor(&t, &w.samples, TAU * F_C);
        let exact = ss.probe(probe).unwrap();
        assert!((fit - exact).norm() < 1e-3 * exact.norm(), "{probe}: fit {fit} exact {exact}");
    }
}

#[test]
fn series_rlc_at_resonance() {
    let text = r#"
ground = "0"
[[elements]]
id = "R"
kind = "resistor"
value = "50Ohm"
nodes = ["in", "x"]
[[elements]]
id = "L"
kind = "inductor"
value = "1uH"
nodes = ["x", "y"]
[[elements]]
id = "C"
kind = "capacitor"
value = "1nF"
nodes = ["y", "0"]
[[sources]]
id = "V"
kind = "sinusoid"
amplitude = "2V"
frequency = "1MHz"
phase = "0rad"
nodes = ["in", "0"]
[[probes]]
name = "v_c"
element = "C"
[[probes]]
name = "v_r"
element = "R"
"#;
    let mut net = Netlist::from_toml(text).unwrap();
    let f0 = 1.0 / (TAU * (1e-6f64 * 1e-9).sqrt());
    if let Some(s) = net.source_mut("V") {
        s.waveform = SourceWaveform::Sinusoid { amplitude: 2.0, frequency: f0, phase: 0.0 };
    }
    let ss = netlist_steady_state(&net, &SwitchConfiguration::new(), "V").unwrap();
    // Current V/R through R, in phase with the source.
    let i = ss.probe("v_r").unwrap() / 50.0;
    assert!((i - Complex64::new(2.0 / 50.0, 0.0)).norm() < 1e-9);
    let vc = ss.probe("v_c").unwrap();
    assert!((vc.arg() + PI / 2.0).abs() < 1e-9);
}

#[test]
fn peaks_of_zero_phase_are_period_multiples() {
    let f = 10e6;
    let p = peak_times(Complex64::new(3.0, 0.0), 0.0, f, (0.0, 5.01e-7)).unwrap();
    assert_eq!(p.len(), 6);
    for (k, t) in p.iter().enumerate() {
        assert!((t - k as f64 / f).abs() < 1e-18);
    }
}

#[test]
fn peaks_follow_phasor_phase() {
    let f = 10e6;
    let phi = 0.7;
    let p = peak_times(Complex64::from_polar(1.0, phi), 0.2, f, (0.0, 3e-7)).unwrap();
    for t in p {
        let v = (TAU * f * t + phi + 0.2).cos();
        assert!((v - 1.0).abs() < 1e-12);
    }
    assert_eq!(peak_times(Complex64::new(0.0, 0.0), 0.0, f, (0.0, 1.0)), Err(Error::NoPeak));
}

#[test]
fn first_peak_matches_simulated_maximum() {
    let net = presets::reference_dam().unwrap();
    let ss = netlist_steady_state(&net, &on(&net), "vcw").unwrap();
    let t_ss = 6e-6;
    let dt = 1.0 / F_C / 256.0;
    let mut opts = SimOptions::new(t_ss + 1.0 / F_C, dt);
    opts.record_from = Some(t_ss);
    opts.probes = Some(vec!["v_a".into()]);
    let out = simulate(&net, &SwitchSchedule::constant(on(&net)), &SourceDrive::new(), None, &opts).unwrap();
    let w = out.waveform("v_a").unwrap();
    let (imax, _) = w.samples.iter().enumerate().fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let peaks = peak_times(ss.probe("v_a").unwrap(), 0.0, F_C, (w.start, w.time(w.len() - 1))).unwrap();
    let nearest = peaks.iter().map(|p| (p - w.time(imax)).abs()).fold(f64::MAX, f64::min);
    assert!(nearest <= dt, "peak offset {nearest:e}");
}

#[test]
fn steady_state_snapshot_matches_phasor() {
    let net = presets::reference_dam().unwrap();
    let ss = netlist_steady_state(&net, &on(&net), "vcw").unwrap();
    let va = ss.probe("v_a").unwrap();
    let t = 0.37 / F_C;
    let state = ss.circuit_state(t);
    let vc = ss.probe("v_C").unwrap();
    let expect = (vc * Complex64::from_polar(1.0, TAU * F_C * t)).re;
    assert!((state.values["C"] - expect).abs() < 1e-12 * va.norm());
}

#[test]
fn unstable_or_non_sinusoidal_inputs_rejected() {
    let net = presets::reference_dam().unwrap();
    let model = assemble(&net, &on(&net)).unwrap();
    let dc = damsim_core::netlist::SourceShape::Dc { level: 1.0 };
    assert!(matches!(steady_state_phasor(&model, "vcw", &dc), Err(Error::Validation(_))));
    let mut lossless = model.clone();
    lossless.a *= -1.0;
    let s = damsim_core::netlist::SourceShape::Sinusoid { amplitude: 1.0, frequency: F_C, phase: 0.0 };
    assert!(matches!(steady_state_phasor(&lossless, "vcw", &s), Err(Error::Conditioning(_))));
}

#[test]
fn colliding_events_rejected() {
    let net = presets::reference_dam().unwrap();
    let schedule = SwitchSchedule {
        initial: on(&net),
        events: vec![
            SwitchEvent { time: 1e-8, configuration: off(&net) },
            SwitchEvent { time: 1e-8, configuration: on(&net) },
        ],
    };
    let r = simulate(&net, &schedule, &SourceDrive::new(), None, &SimOptions::new(1e-7, 1e-9));
    assert!(matches!(r, Err(Error::Schedule(_))));
}

#[test]
fn missing_probe_names_segment() {
    let net = presets::reference_dam().unwrap();
    let mut opts = SimOptions::new(1e-7, 1e-9);
    opts.probes = Some(vec!["v_x".into()]);
    let r = simulate(&net, &SwitchSchedule::constant(on(&net)), &SourceDrive::new(), None, &opts);
    assert_eq!(r.unwrap_err(), Error::Probe { probe: "v_x".into(), segment_start: 0.0 });
}

#[test]
fn csv_export_has_header_and_full_precision() {
    let net = presets::reference_dam().unwrap();
    let mut opts = SimOptions::new(1e-8, 1e-9);
    opts.probes = Some(vec!["v_a".into(), "v_rad".into()]);
    let out = simulate(&net, &SwitchSchedule::constant(on(&net)), &SourceDrive::new(), None, &opts).unwrap();
    let mut buf = Vec::new();
    write_waveforms_csv(&mut buf, &[out.waveform("v_a").unwrap(), out.waveform("v_rad").unwrap()]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_s,v_a,v_rad"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    let v: f64 = rows[5].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(v, out.waveform("v_a").unwrap().samples[5]);
}

/// Independent count of reactive states: rank of the capacitor graph with
/// ground and ideal-source nodes merged, plus inductors minus inductor-only cutsets.
fn graph_rank_states(net: &Netlist, config: &SwitchConfiguration) -> usize {
    use damsim_core::netlist::ElementKind;
    let elements = net.effective_elements(config).unwrap();
    let nodes = net.nodes();
    let idx = |name: &str| nodes.iter().position(|n| n == name).unwrap();
    let mut reference = vec![idx(&net.ground)];
    for s in &net.sources {
        if s.series_resistance == 0.0 {
            reference.extend(s.nodes.iter().map(|n| idx(n)));
        }
    }
    let parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let components = |edges: &[(usize, usize)], merge_ref: bool| {
        let mut p = parent.clone();
        let mut rank = 0;
        let mut all: Vec<(usize, usize)> = edges.to_vec();
        if merge_ref {
            for w in reference.windows(2) {
                all.push((w[0], w[1]));
            }
        }
        for (a, b) in all {
            let (ra, rb) = (find(&mut p, a), find(&mut p, b));
            if ra != rb {
                p[ra] = rb;
                rank += 1;
            }
        }
        rank
    };
    let ends = |kind: ElementKind| -> Vec<(usize, usize)> {
        elements.iter().filter(|e| e.kind == kind).map(|e| (idx(&e.nodes[0]), idx(&e.nodes[1]))).collect()
    };
    let caps = ends(ElementKind::Capacitor);
    let inds = ends(ElementKind::Inductor);
    let mut others = ends(ElementKind::Resistor);
    others.extend(caps.iter().copied());
    for s in &net.sources {
        others.push((idx(&s.nodes[0]), idx(&s.nodes[1])));
    }
    let ref_rank = components(&[], true);
    let cap_rank = components(&caps, true) - ref_rank;
    let mut everything = others.clone();
    everything.extend(inds.iter().copied());
    // Contracting every non-inductor edge leaves one independent cut per inductor-only cutset.
    let cutsets = components(&everything, false) - components(&others, false);
    cap_rank + inds.len() - cutsets
}

#[test]
fn reference_off_state_count_matches_graph_rank() {
    let net = presets::reference_off().unwrap();
    let config = off(&net);
    let model = assemble(&net, &config).unwrap();
    assert_eq!(graph_rank_states(&net, &config), 5);
    assert_eq!(model.order(), 5);
    let mut names = model.state_names();
    names.sort();
    assert_eq!(names, vec!["C", "C_L1+S1.csw", "C_L2+C_s", "L", "L_m"]);
}

#[test]
fn preset_state_counts_match_graph_rank() {
    for net in [presets::reference_dam().unwrap(), presets::reference_dcdam().unwrap()] {
        for cfg in [on(&net), off(&net)] {
            let model = assemble(&net, &cfg).unwrap();
            assert_eq!(model.order(), graph_rank_states(&net, &cfg), "{cfg:?}");
        }
    }
}

#[test]
fn reference_off_eigenvalues_match_independent_oracle() {
    // Frozen from an independent nodal-admittance determinant computed outside this crate.
    let expect = [
        Complex64::new(-1698.9467, 0.0),
        Complex64::new(-2.82877e6, 3.21997e8),
        Complex64::new(-7.05316e7, 7.43118e8),
    ];
    let net = presets::reference_off().unwrap();
    let model = assemble(&net, &off(&net)).unwrap();
    let eig = model.a.complex_eigenvalues();
    for e in expect {
        let hit = eig.iter().any(|l| (l.re - e.re).abs() < 1e-5 * e.norm() && (l.im.abs() - e.im).abs() < 1e-5 * e.norm());
        assert!(hit, "missing {e} in {eig:?}");
    }
}
