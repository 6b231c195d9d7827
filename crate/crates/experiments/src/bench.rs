//! Transmitter set-up shared by the runners: netlist, carrier, steady state and stream simulation.

use std::f64::consts::TAU;

use damsim_core::circuit::CircuitState;
use damsim_core::modulator::{build_schedule, synthesize_source, ModulationPlan, SwitchPaths, SymbolStream, TransmitterMode};
use damsim_core::netlist::{Netlist, SourceWaveform, SwitchConfiguration};
use damsim_core::phasor::{input_impedance, netlist_steady_state, SteadyState};
use damsim_core::presets::scale_parasitics;
use damsim_core::sim::{simulate, SimOptions, SimOutput, SourceDrive, Waveform};
use damsim_core::Error;

use crate::config::{CarrierSpec, ExperimentConfig, ResistanceSpec};
use crate::error::{ExpError, Result};

/// Transmitter netlist tuned to one carrier, with its ON-state steady state.
#[derive(Debug, Clone)]
pub struct Bench {
    pub netlist: Netlist,
    pub source: String,
    pub rf_switch: String,
    pub dc_switch: Option<String>,
    pub dc_source: Option<String>,
    pub f_c: f64,
    pub v_cw: f64,
    pub samples_per_cycle: u32,
    /// Steady state for a zero-phase source with the RF path closed.
    pub steady: SteadyState,
    /// Peak terminal voltage `|v_a|`.
    pub v_ss: f64,
    /// Peak stored voltage `|v_C|`, the reference for DC levels.
    pub stored: f64,
    /// Peak radiated voltage `|v_rad|`.
    pub rad_peak: f64,
}

fn sinusoid_of(net: &Netlist, source: &str) -> Result<(f64, f64, f64)> {
    let s = net
        .source(source)
        .ok_or_else(|| ExpError::Config(format!("netlist has no source '{source}'")))?;
    match s.waveform {
        SourceWaveform::Sinusoid { amplitude, frequency, phase } => Ok((amplitude, frequency, phase)),
        _ => Err(ExpError::Config(format!("source '{source}' is not a sinusoid"))),
    }
}

/// Zero of `Im Z_in` nearest `f_guess`, by scan over ±25% and bisection.
pub fn resonance(net: &Netlist, config: &SwitchConfiguration, source: &str, f_guess: f64) -> Result<f64> {
    let x = |f: f64| -> Result<f64> { Ok(input_impedance(net, config, source, f)?.im) };
    let n = 400;
    let freqs: Vec<f64> = (0..=n).map(|k| f_guess * (0.75 + 0.5 * k as f64 / n as f64)).collect();
    let xs = freqs.iter().map(|&f| x(f)).collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..n {
        if xs[k] == 0.0 || xs[k].signum() != xs[k + 1].signum() {
            let (mut lo, mut hi, mut xlo) = (freqs[k], freqs[k + 1], xs[k]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let xm = x(mid)?;
                if xm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if xm.signum() == xlo.signum() {
                    lo = mid;
                    xlo = xm;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * hi {
                    break;
                }
            }
            let f = 0.5 * (lo + hi);
            if best.is_none_or(|(_, d)| (f - f_guess).abs() < d) {
                best = Some((f, (f - f_guess).abs()));
            }
        }
    }
    best.map(|(f, _)| f)
        .ok_or_else(|| ExpError::Core(Error::Consistency(format!("no zero-reactance frequency within 25% of {f_guess} Hz"))))
}

impl Bench {
    pub fn new(cfg: &ExperimentConfig) -> Result<Bench> {
        let mut net = cfg.load_netlist(&cfg.netlist)?;
        if cfg.parasitic_scale != 1.0 {
            scale_parasitics(&mut net, cfg.parasitic_scale);
        }
        let source = cfg.source.clone();
        let (amp, f_net, phase) = sinusoid_of(&net, &source)?;
        let v_cw = cfg.amplitude()?.unwrap_or(amp);
        let radiate = SwitchPaths::for_mode(&net, TransmitterMode::Lti, &cfg.rf_switch, None)?.radiate;
        let f_c = match cfg.carrier_spec()? {
            CarrierSpec::Netlist => f_net,
            CarrierSpec::Fixed(f) => f,
            CarrierSpec::Resonant => resonance(&net, &radiate, &source, f_net)?,
        };
        {
            let s = net.source_mut(&source).expect("checked above");
            s.waveform = SourceWaveform::Sinusoid { amplitude: v_cw, frequency: f_c, phase };
        }
        match cfg.resistance_spec()? {
            ResistanceSpec::Netlist => {}
            ResistanceSpec::Fixed(r) => net.source_mut(&source).expect("checked above").series_resistance = r,
            ResistanceSpec::Matched => {
                let z = input_impedance(&net, &radiate, &source, f_c)?;
                if !(z.re > 0.0) {
                    return Err(ExpError::Core(Error::Consistency(format!("input resistance {} at {f_c} Hz", z.re))));
                }
                net.source_mut(&source).expect("checked above").series_resistance = z.re;
            }
        }
        // Zero-phase reference so phasors rotate with the symbol phase.
        if let SourceWaveform::Sinusoid { phase, .. } = &mut net.source_mut(&source).expect("checked above").waveform {
            *phase = 0.0;
        }
        let steady = netlist_steady_state(&net, &radiate, &source)?;
        let v_ss = steady.probe("v_a")?.norm();
        let stored = steady.probe("v_C")?.norm();
        let rad_peak = steady.probe("v_rad")?.norm();
        Ok(Bench {
            netlist: net,
            source,
            rf_switch: cfg.rf_switch.clone(),
            dc_switch: cfg.dc_switch.clone(),
            dc_source: cfg.dc_source.clone(),
            f_c,
            v_cw,
            samples_per_cycle: cfg.samples_per_cycle,
            steady,
            v_ss,
            stored,
            rad_peak,
        })
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_c
    }

    pub fn dt(&self) -> f64 {
        self.period() / self.samples_per_cycle as f64
    }

    pub fn series_resistance(&self) -> f64 {
        self.netlist.source(&self.source).expect("bench source exists").series_resistance
    }

    pub fn paths(&self, mode: TransmitterMode) -> Result<SwitchPaths> {
        Ok(SwitchPaths::for_mode(&self.netlist, mode, &self.rf_switch, self.dc_switch.as_deref())?)
    }

    /// DC-DAM mode holding at `ratio` times the stored peak.
    pub fn dc_mode(&self, ratio: f64) -> TransmitterMode {
        TransmitterMode::DcDam { v_dc: ratio * self.stored }
    }

    /// Netlist with the DC source set for `mode`.
    pub fn netlist_for(&self, mode: TransmitterMode) -> Result<Netlist> {
        let mut net = self.netlist.clone();
        if let TransmitterMode::DcDam { v_dc } = mode {
            let id = self.dc_source.as_deref().ok_or_else(|| ExpError::Config("DC-DAM needs dc_source".into()))?;
            let s = net
                .source_mut(id)
                .ok_or_else(|| ExpError::Config(format!("netlist has no source '{id}'")))?;
            s.waveform = SourceWaveform::Dc { level: v_dc };
        }
        Ok(net)
    }

    /// Steady-state circuit state at `t` for a source running at `phase`.
    pub fn steady_state_at(&self, t: f64, phase: f64) -> CircuitState {
        let mut s = self.steady.circuit_state(t + phase / (TAU * self.f_c));
        s.time = t;
        s
    }

    /// Simulate `stream` in `mode` from the steady state at the first symbol's
    /// phase, recording `probes` over `window`.
    pub fn simulate_stream(
        &self,
        stream: &SymbolStream,
        mode: TransmitterMode,
        t_start: f64,
        window: (f64, f64),
        probes: &[&str],
    ) -> Result<(ModulationPlan, SimOutput)> {
        let paths = self.paths(mode)?;
        let plan = build_schedule(stream, mode, &paths, self.steady.probe("v_a")?, t_start)?;
        if let Some(first) = plan.schedule.events.first() {
            if first.time < window.0 {
                return Err(ExpError::Config("simulation window starts after the first switching event".into()));
            }
        }
        let src = synthesize_source(self.v_cw, self.f_c, &plan.phase_track, window.1)?;
        let mut drive = SourceDrive::new();
        drive.insert(self.source.clone(), src);
        let net = self.netlist_for(mode)?;
        let init = self.steady_state_at(window.0, stream.phases[0]);
        let mut opts = SimOptions::new(window.1, self.dt());
        opts.t_start = window.0;
        opts.probes = Some(probes.iter().map(|s| s.to_string()).collect());
        let out = simulate(&net, &plan.schedule, &drive, Some(&init), &opts)?;
        Ok((plan, out))
    }
}

/// Waveform named `label` from a simulation output.
pub fn trace<'a>(out: &'a SimOutput, label: &str) -> Result<&'a Waveform> {
    out.waveform(label)
        .ok_or_else(|| ExpError::Core(Error::Validation(format!("probe '{label}' was not recorded"))))
}
