//! Single phase transitions, rise times and the DC-level sweep.

use std::f64::consts::TAU;

use damsim_core::dsp::{analytic_envelope, rise_time_95};
use damsim_core::modulator::{phase_delay, preamble_end, SymbolStream, TransmitterMode, QPSK_PHASES};
use damsim_core::sim::{simulate, SimOptions, SourceDrive, SwitchSchedule, Waveform};
use damsim_core::Error;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bench::{trace, Bench};
use crate::config::{mode_label, transmitter_mode, ExperimentConfig, ModeName};
use crate::error::{ExpError, Result};
use crate::report::{num, OutputDir};

/// Cycles of the first symbol simulated before the transition.
const LEAD_CYCLES: f64 = 3.0;

/// Cycles simulated from rest for the LTI charging reference.
pub const CHARGING_CYCLES: u32 = 400;

/// Rise time to 95% of the steady radiated amplitude, or the largest
/// fraction reached when the record ends first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rise {
    Time(f64),
    Timeout { max_fraction: f64 },
}

impl Rise {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            Rise::Time(t) => Some(*t),
            Rise::Timeout { .. } => None,
        }
    }

    fn measure(envelope: &Waveform, event: f64, steady: f64, hold: f64) -> Result<Rise> {
        match rise_time_95(envelope, event, steady, hold) {
            Ok(t) => Ok(Rise::Time(t)),
            Err(Error::Timeout { max_fraction }) => Ok(Rise::Timeout { max_fraction }),
            Err(e) => Err(e.into()),
        }
    }

    fn csv(&self, period: f64) -> String {
        match self {
            Rise::Time(t) => format!("{t:e},{:e},", t / period),
            Rise::Timeout { max_fraction } => format!("NaN,NaN,{max_fraction:e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub mode: TransmitterMode,
    /// Phase retardation in radians.
    pub delta: f64,
    /// Close instant for DAM, the symbol boundary for LTI.
    pub event: f64,
    pub open: Option<f64>,
    pub v_c: Waveform,
    pub v_rad: Waveform,
    pub envelope: Waveform,
    pub rise: Rise,
}

impl Transition {
    /// Peak-to-peak of `v_C` between the open and close instants; zero for LTI.
    pub fn off_swing(&self) -> f64 {
        let Some(open) = self.open else { return 0.0 };
        let (lo, hi) = (self.v_c.index_at_or_after(open), self.v_c.index_at_or_after(self.event));
        let (mn, mx) = self.v_c.samples[lo..=hi.min(self.v_c.len() - 1)]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        mx - mn
    }
}

/// QPSK label reached from label 0 by retarding the phase by `delta`.
pub fn target_label(delta: f64) -> Result<usize> {
    (0..QPSK_PHASES.len())
        .find(|&k| (phase_delay(QPSK_PHASES[0], QPSK_PHASES[k]) - delta).abs() < 1e-9)
        .ok_or_else(|| ExpError::Config(format!("no QPSK transition retards the phase by {delta} rad")))
}

/// One transition out of steady state, followed for `settle_cycles`.
pub fn single_transition(bench: &Bench, mode: TransmitterMode, delta: f64, settle_cycles: u32) -> Result<Transition> {
    let n = settle_cycles + LEAD_CYCLES as u32 + 2;
    let stream = SymbolStream::new(vec![0, target_label(delta)?], bench.f_c, n)?;
    let t_start = preamble_end(&stream, 10.0)?;
    let boundary = t_start + stream.symbol_period();
    let t_c = bench.period();
    let window = (boundary - LEAD_CYCLES * t_c, boundary + settle_cycles as f64 * t_c);
    let (plan, out) = bench.simulate_stream(&stream, mode, t_start, window, &["v_C", "v_rad"])?;
    let (event, open) = match plan.gaps.first() {
        Some(g) => (g.close, Some(g.open)),
        None => (boundary, None),
    };
    let v_rad = trace(&out, "v_rad")?.clone();
    let envelope = analytic_envelope(&v_rad)?;
    let rise = Rise::measure(&envelope, event, bench.rad_peak, t_c)?;
    Ok(Transition { mode, delta, event, open, v_c: trace(&out, "v_C")?.clone(), v_rad, envelope, rise })
}

/// LTI charging from rest: rise time of the radiated envelope after the source turns on.
pub fn charging_rise(bench: &Bench) -> Result<Rise> {
    let t_end = CHARGING_CYCLES as f64 * bench.period();
    let radiate = bench.paths(TransmitterMode::Lti)?.radiate;
    let mut opts = SimOptions::new(t_end, bench.dt());
    opts.probes = Some(vec!["v_rad".into()]);
    let out = simulate(&bench.netlist, &SwitchSchedule::constant(radiate), &SourceDrive::new(), None, &opts)?;
    let envelope = analytic_envelope(trace(&out, "v_rad")?)?;
    Rise::measure(&envelope, 0.0, bench.rad_peak, bench.period())
}

/// Ideal-DAM overlay value of a probe with phasor `p`: steady state at the
/// old phase before the open, frozen through the gap, new phase after.
fn ideal(bench: &Bench, tr: &Transition, p: Complex64, t: f64, frozen_zero: bool) -> f64 {
    let w = TAU * bench.f_c;
    let old = QPSK_PHASES[0];
    let new = old - tr.delta;
    let at = |t: f64, th: f64| (p * Complex64::from_polar(1.0, w * t + th)).re;
    match tr.open {
        Some(open) if t < open => at(t, old),
        Some(open) if t < tr.event => {
            if frozen_zero {
                0.0
            } else {
                at(open, old)
            }
        }
        Some(_) => at(t, new),
        None if t < tr.event => at(t, old),
        None => at(t, new),
    }
}

fn write_transition(out: &mut OutputDir, bench: &Bench, tr: &Transition, label: &str) -> Result<()> {
    let deg = tr.delta.to_degrees().round() as i64;
    let pc = bench.steady.probe("v_C")?;
    let pr = bench.steady.probe("v_rad")?;
    out.write(&format!("transition_{label}_{deg}.csv"), |w| {
        writeln!(w, "time_s,v_c,v_rad,envelope,v_c_ideal,v_rad_ideal")?;
        for i in 0..tr.v_rad.len() {
            let t = tr.v_rad.time(i);
            writeln!(
                w,
                "{t:e},{:e},{:e},{:e},{:e},{:e}",
                tr.v_c.samples[i] / bench.stored,
                tr.v_rad.samples[i] / bench.rad_peak,
                tr.envelope.samples[i] / bench.rad_peak,
                ideal(bench, tr, pc, t, false) / bench.stored,
                ideal(bench, tr, pr, t, true) / bench.rad_peak,
            )?;
        }
        Ok(())
    })
}

pub fn run_single_transition(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
    let bench = Bench::new(cfg)?;
    let deltas = cfg.transition_angles()?;
    let runs: Vec<(ModeName, Option<f64>, f64)> = cfg
        .expanded_modes()
        .into_iter()
        .flat_map(|(m, r)| deltas.iter().map(move |&d| (m, r, d)))
        .collect();
    let results = runs
        .par_iter()
        .map(|&(m, r, d)| single_transition(&bench, transmitter_mode(m, r.map(|r| r * bench.stored)), d, cfg.settle_cycles))
        .collect::<Result<Vec<_>>>()?;
    let mut metrics = vec![("carrier_hz".to_string(), num(bench.f_c)), ("v_ss".into(), num(bench.v_ss))];
    for (&(m, r, _), tr) in runs.iter().zip(&results) {
        let label = mode_label(m, r);
        write_transition(out, &bench, tr, &label)?;
        let deg = tr.delta.to_degrees().round() as i64;
        metrics.push((
            format!("rise_cycles.{label}.{deg}"),
            tr.rise.seconds().map(|t| num(t / bench.period())).unwrap_or_else(|| "NaN".into()),
        ));
        metrics.push((format!("off_swing.{label}.{deg}"), num(tr.off_swing() / bench.stored)));
    }
    let t_c = bench.period();
    out.write("rise_times.csv", |w| {
        writeln!(w, "mode,vdc_ratio,transition_deg,event_s,rise_time_s,rise_time_cycles,max_fraction")?;
        for (&(m, r, _), tr) in runs.iter().zip(&results) {
            let ratio = r.map(|r| format!("{r:e}")).unwrap_or_default();
            let deg = tr.delta.to_degrees().round() as i64;
            writeln!(w, "{},{ratio},{deg},{:e},{}", m.name(), tr.event, tr.rise.csv(t_c))?;
        }
        Ok(())
    })?;
    Ok(metrics)
}

/// Rise times over DC levels and transitions, with open-circuit and LTI references.
#[derive(Debug, Clone)]
pub struct VdcSweep {
    pub period: f64,
    /// `(ratio, Δθ, rise)` in config order.
    pub points: Vec<(f64, f64, Rise)>,
    pub open_circuit: Vec<(f64, Rise)>,
    pub lti_transition: Vec<(f64, Rise)>,
    pub lti_charging: Rise,
}

impl VdcSweep {
    pub fn rise(&self, ratio: f64, delta: f64) -> Option<Rise> {
        self.points
            .iter()
            .find(|(r, d, _)| (r - ratio).abs() < 1e-12 && (d - delta).abs() < 1e-9)
            .map(|(_, _, x)| *x)
    }
}

pub fn vdc_sweep(cfg: &ExperimentConfig) -> Result<VdcSweep> {
    let bench = Bench::new(cfg)?;
    let deltas = cfg.transition_angles()?;
    let grid: Vec<(f64, f64)> = cfg.vdc_ratios.iter().flat_map(|&r| deltas.iter().map(move |&d| (r, d))).collect();
    let points = grid
        .par_iter()
        .map(|&(r, d)| Ok((r, d, single_transition(&bench, bench.dc_mode(r), d, cfg.settle_cycles)?.rise)))
        .collect::<Result<Vec<_>>>()?;
    let reference = |mode: TransmitterMode| {
        deltas
            .par_iter()
            .map(|&d| Ok((d, single_transition(&bench, mode, d, cfg.settle_cycles)?.rise)))
            .collect::<Result<Vec<_>>>()
    };
    Ok(VdcSweep {
        period: bench.period(),
        points,
        open_circuit: reference(TransmitterMode::OcDam)?,
        lti_transition: reference(TransmitterMode::Lti)?,
        lti_charging: charging_rise(&bench)?,
    })
}

pub fn run_vdc_sweep(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
    let s = vdc_sweep(cfg)?;
    let t_c = s.period;
    out.write("vdc_sweep.csv", |w| {
        writeln!(w, "vdc_ratio,transition_deg,rise_time_s,rise_time_cycles,max_fraction")?;
        for (r, d, rise) in &s.points {
            writeln!(w, "{r:e},{},{}", d.to_degrees().round() as i64, rise.csv(t_c))?;
        }
        Ok(())
    })?;
    out.write("references.csv", |w| {
        writeln!(w, "reference,transition_deg,rise_time_s,rise_time_cycles,max_fraction")?;
        for (d, rise) in &s.open_circuit {
            writeln!(w, "oc-dam,{},{}", d.to_degrees().round() as i64, rise.csv(t_c))?;
        }
        for (d, rise) in &s.lti_transition {
            writeln!(w, "lti,{},{}", d.to_degrees().round() as i64, rise.csv(t_c))?;
        }
        writeln!(w, "lti-charging,,{}", s.lti_charging.csv(t_c))?;
        Ok(())
    })?;
    let cycles = |r: &Rise| r.seconds().map(|t| num(t / t_c)).unwrap_or_else(|| "NaN".into());
    let mut m = vec![("lti_charging_cycles".to_string(), cycles(&s.lti_charging))];
    for (d, rise) in &s.open_circuit {
        m.push((format!("oc_dam_cycles.{}", d.to_degrees().round() as i64), cycles(rise)));
    }
    Ok(m)
}
