//! OFF-state ringdown: simulated and analytic terminal and radiated voltages.

use damsim_core::circuit::CircuitState;
use damsim_core::laplace::{off_state_network, probe_expansion, CoefficientTable, TransientExpansion};
use damsim_core::modulator::TransmitterMode;
use damsim_core::netlist::{ElementKind, Netlist, SwitchPosition};
use damsim_core::phasor::peak_at_or_before;
use damsim_core::presets::scale_parasitics;
use damsim_core::sim::{simulate, SimOptions, SourceDrive, SwitchSchedule, Waveform};

use crate::bench::{trace, Bench};
use crate::config::ExperimentConfig;
use crate::error::{ExpError, Result};
use crate::fit::{fit_damped_sinusoid, FitOutcome};
use crate::report::{num, OutputDir};

/// Peak-to-peak below this fraction of `V_ss` counts as no oscillation.
pub const FLAT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Ringdown {
    pub bench: Bench,
    /// Charged-capacitor initial state of the OFF network.
    pub initial: CircuitState,
    pub va_expansion: TransientExpansion,
    pub vrad_expansion: TransientExpansion,
    /// OFF network from `initial`, sharing the analytic route's assumptions.
    pub va_sim: Waveform,
    pub vrad_sim: Waveform,
    /// Full transmitter opened at a terminal peak, source still running.
    pub va_switch_open: Waveform,
    pub vrad_switch_open: Waveform,
    /// Inductor currents at the open instant, which the analytic route omits.
    pub inductor_currents: Vec<(String, f64)>,
    pub fit: FitOutcome,
}

impl Ringdown {
    pub fn v_ss(&self) -> f64 {
        self.bench.v_ss
    }

    /// Largest `|simulated − analytic|/V_ss` for `v_a` and `v_rad`.
    pub fn analytic_error(&self) -> (f64, f64) {
        (max_dev(&self.va_sim, &self.va_expansion, self.v_ss()), max_dev(&self.vrad_sim, &self.vrad_expansion, self.v_ss()))
    }

    /// Largest deviation of the switch-open traces from the analytic ones, over `V_ss`.
    pub fn switch_open_deviation(&self) -> (f64, f64) {
        let shift = |w: &Waveform| Waveform { start: 0.0, ..w.clone() };
        (
            max_dev(&shift(&self.va_switch_open), &self.va_expansion, self.v_ss()),
            max_dev(&shift(&self.vrad_switch_open), &self.vrad_expansion, self.v_ss()),
        )
    }

    /// `max |v_a − V_ss|/V_ss` and `max |v_rad|/V_ss` over the OFF window.
    pub fn ideal_limit_deviation(&self) -> (f64, f64) {
        let v = self.v_ss();
        let da = self.va_sim.samples.iter().map(|x| (x - v).abs()).fold(0.0, f64::max) / v;
        let dr = self.vrad_sim.samples.iter().map(|x| x.abs()).fold(0.0, f64::max) / v;
        (da, dr)
    }

    /// Analytic `(ω₁, α₁)`: the least-damped oscillatory pair of `v_a`.
    pub fn analytic_ring(&self) -> Option<(f64, f64)> {
        self.va_expansion.pairs.first().map(|p| (p.omega, p.alpha))
    }
}

fn max_dev(w: &Waveform, e: &TransientExpansion, scale: f64) -> f64 {
    (0..w.len()).map(|i| (w.samples[i] - e.eval(w.time(i))).abs()).fold(0.0, f64::max) / scale
}

/// Capacitors across the terminal at `V_ss`, the probed series capacitor at
/// its peak stored voltage, everything else discharged.
fn charged_state(off: &Netlist, bench: &Bench) -> Result<CircuitState> {
    let terminal = off
        .probe("v_a")
        .ok_or_else(|| ExpError::Config("OFF netlist has no 'v_a' probe".into()))?
        .nodes
        .clone();
    let stored = off
        .probe("v_C")
        .ok_or_else(|| ExpError::Config("OFF netlist has no 'v_C' probe".into()))?
        .nodes
        .clone();
    let mut s = CircuitState::new(0.0);
    for e in off.elements.iter().filter(|e| e.kind == ElementKind::Capacitor) {
        if e.nodes == terminal {
            s = s.with(&e.id, bench.v_ss);
        } else if e.nodes == stored {
            s = s.with(&e.id, bench.stored);
        }
    }
    Ok(s)
}

pub fn ringdown(cfg: &ExperimentConfig) -> Result<Ringdown> {
    let bench = Bench::new(cfg)?;
    let mut off = cfg.load_netlist(cfg.off_netlist.as_deref().unwrap_or("reference_off"))?;
    if cfg.parasitic_scale != 1.0 {
        scale_parasitics(&mut off, cfg.parasitic_scale);
    }
    let initial = charged_state(&off, &bench)?;
    let off_cfg = off.uniform_configuration(SwitchPosition::Off);
    let network = off_state_network(&off, &off_cfg, &initial)?;
    let va_expansion = probe_expansion(&network, "v_a")?;
    let vrad_expansion = probe_expansion(&network, "v_rad")?;
    let t_off = cfg.off_cycles as f64 * bench.period();
    let mut opts = SimOptions::new(t_off, bench.dt());
    opts.probes = Some(vec!["v_a".into(), "v_rad".into()]);
    let out = simulate(&off, &SwitchSchedule::constant(off_cfg), &SourceDrive::new(), Some(&initial), &opts)?;
    let va_sim = trace(&out, "v_a")?.clone();
    let vrad_sim = trace(&out, "v_rad")?.clone();

    // Open the RF path of the full transmitter at a terminal peak.
    let t_open = peak_at_or_before(bench.steady.probe("v_a")?, 0.0, bench.f_c, 20.0 * bench.period())?;
    let hold = bench.paths(TransmitterMode::OcDam)?.hold;
    let open_state = bench.steady_state_at(t_open, 0.0);
    let inductor_currents = bench
        .netlist
        .elements
        .iter()
        .filter(|e| e.kind == ElementKind::Inductor)
        .filter_map(|e| open_state.values.get(&e.id).map(|v| (e.id.clone(), *v)))
        .collect();
    let mut opts = SimOptions::new(t_open + t_off, bench.dt());
    opts.t_start = t_open;
    opts.probes = Some(vec!["v_a".into(), "v_rad".into()]);
    let out = simulate(&bench.netlist, &SwitchSchedule::constant(hold), &SourceDrive::new(), Some(&open_state), &opts)?;
    let va_switch_open = trace(&out, "v_a")?.clone();
    let vrad_switch_open = trace(&out, "v_rad")?.clone();

    let skip = cfg.fit_skip_cycles as f64 * bench.period();
    let i0 = vrad_sim.index_at_or_after(skip);
    let t: Vec<f64> = (i0..vrad_sim.len()).map(|i| vrad_sim.time(i)).collect();
    let fit = fit_damped_sinusoid(&t, &vrad_sim.samples[i0..], FLAT_THRESHOLD * bench.v_ss)?;
    Ok(Ringdown {
        bench,
        initial,
        va_expansion,
        vrad_expansion,
        va_sim,
        vrad_sim,
        va_switch_open,
        vrad_switch_open,
        inductor_currents,
        fit,
    })
}

pub fn run_ringdown(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
    let r = ringdown(cfg)?;
    let v = r.v_ss();
    out.write("ringdown_traces.csv", |w| {
        writeln!(w, "time_s,va_sim,vrad_sim,va_analytic,vrad_analytic,va_switch_open,vrad_switch_open")?;
        for i in 0..r.va_sim.len() {
            let t = r.va_sim.time(i);
            writeln!(
                w,
                "{t:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.va_sim.samples[i] / v,
                r.vrad_sim.samples[i] / v,
                r.va_expansion.eval(t) / v,
                r.vrad_expansion.eval(t) / v,
                r.va_switch_open.samples.get(i).copied().unwrap_or(f64::NAN) / v,
                r.vrad_switch_open.samples.get(i).copied().unwrap_or(f64::NAN) / v,
            )?;
        }
        Ok(())
    })?;
    out.write("expansion_va.csv", |mut w| r.va_expansion.write_csv(&mut w))?;
    out.write("expansion_vrad.csv", |mut w| r.vrad_expansion.write_csv(&mut w))?;
    if let Ok(table) = CoefficientTable::from_expansions(&r.va_expansion, &r.vrad_expansion) {
        out.write("coefficients.csv", |w| {
            writeln!(w, "name,value")?;
            let rows = [
                ("A0", table.a0),
                ("alpha0", table.alpha0),
                ("A1", table.a1),
                ("B1", table.b1),
                ("C1", table.c1),
                ("D1", table.d1),
                ("omega1", table.omega1),
                ("alpha1", table.alpha1),
                ("A2", table.a2),
                ("B2", table.b2),
                ("C2", table.c2),
                ("D2", table.d2),
                ("omega2", table.omega2),
                ("alpha2", table.alpha2),
            ];
            for (k, x) in rows {
                writeln!(w, "{k},{x:e}")?;
            }
            Ok(())
        })?;
    }
    let (ea, er) = r.analytic_error();
    let (sa, sr) = r.switch_open_deviation();
    let (ia, ir) = r.ideal_limit_deviation();
    let mut m = vec![
        ("carrier_hz".to_string(), num(r.bench.f_c)),
        ("v_ss".into(), num(v)),
        ("analytic_error_va".into(), num(ea)),
        ("analytic_error_vrad".into(), num(er)),
        ("switch_open_deviation_va".into(), num(sa)),
        ("switch_open_deviation_vrad".into(), num(sr)),
        ("ideal_deviation_va".into(), num(ia)),
        ("ideal_deviation_vrad".into(), num(ir)),
    ];
    for (id, i) in &r.inductor_currents {
        m.push((format!("open_current_{id}"), num(*i)));
    }
    if let Some((w1, a1)) = r.analytic_ring() {
        m.push(("analytic_omega1".into(), num(w1)));
        m.push(("analytic_alpha1".into(), num(a1)));
    }
    match r.fit {
        FitOutcome::Oscillation(f) => {
            m.push(("fit".into(), "oscillation".into()));
            m.push(("fit_frequency_hz".into(), num(f.frequency())));
            m.push(("fit_omega".into(), num(f.omega)));
            m.push(("fit_omega_sd".into(), num(f.omega_sd)));
            m.push(("fit_alpha".into(), num(f.alpha)));
            m.push(("fit_alpha_sd".into(), num(f.alpha_sd)));
            m.push(("fit_rel_residual".into(), num(f.rel_residual)));
        }
        FitOutcome::NoOscillation { peak_to_peak } => {
            m.push(("fit".into(), "none".into()));
            m.push(("fit_peak_to_peak".into(), num(peak_to_peak / v)));
        }
    }
    Ok(m)
}
