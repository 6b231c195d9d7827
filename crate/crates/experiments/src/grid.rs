//! Equivalent-LTI antenna grid with the DC-DAM trajectory for overlay.

use std::f64::consts::TAU;

use damsim_core::dsp::{evm_db, mean_symbol_power};
use damsim_core::lti_equiv::{carrier_grid, grid_metrics, q_from_impedance, write_grid_csv, AntennaParameters, GridRow, Measurement};
use damsim_core::modulator::{build_schedule, preamble_end, synthesize_source, TransmitterMode};
use damsim_core::phasor::input_impedance;
use damsim_core::sim::Waveform;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bench::{resonance, Bench};
use crate::config::ExperimentConfig;
use crate::error::{ExpError, Result};
use crate::prbs::{prbs_stream, receive, transmit, MARGIN_CYCLES};
use crate::report::{num, OutputDir};

/// Charging preamble in units of the loaded Q, in carrier cycles.
const PREAMBLE_PER_Q: f64 = 5.0;

/// Power and EVM of one circuit-simulated transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    /// `None` for the open-circuit hold.
    pub vdc_ratio: Option<f64>,
    /// Relative to the LTI circuit simulation.
    pub avg_power_norm: f64,
    pub evm_db: f64,
}

#[derive(Debug, Clone)]
pub struct LtiGrid {
    pub antenna: AntennaParameters,
    pub loaded_q: f64,
    pub rows: Vec<GridRow>,
    /// LTI circuit simulation through the same receiver.
    pub lti_circuit_evm_db: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl LtiGrid {
    pub fn grid_point(&self, xi: f64, chi: f64) -> Option<&GridRow> {
        self.rows.iter().find(|r| (r.xi - xi).abs() < 1e-12 && (r.chi - chi).abs() < 1e-12)
    }

    /// Grid rows within `chi_range`, `xi_range` whose EVM is within `evm_tol` dB
    /// and whose normalized power is within `power_tol` (relative) of `p`.
    pub fn equivalents(
        &self,
        p: &TrajectoryPoint,
        xi_range: (f64, f64),
        chi_range: (f64, f64),
        evm_tol: f64,
        power_tol: f64,
    ) -> Vec<GridRow> {
        let eps = 1e-12;
        self.rows
            .iter()
            .filter(|r| r.xi >= xi_range.0 - eps && r.xi <= xi_range.1 + eps)
            .filter(|r| r.chi >= chi_range.0 - eps && r.chi <= chi_range.1 + eps)
            .filter(|r| (r.evm_db - p.evm_db).abs() <= evm_tol)
            .filter(|r| (r.avg_power_norm - p.avg_power_norm).abs() <= power_tol * p.avg_power_norm)
            .copied()
            .collect()
    }

    /// Grid row nearest `p` in (EVM dB, 10·log₁₀ power) distance.
    pub fn nearest(&self, p: &TrajectoryPoint) -> Option<GridRow> {
        let d = |r: &GridRow| {
            let dp = 10.0 * (r.avg_power_norm / p.avg_power_norm).log10();
            (r.evm_db - p.evm_db).hypot(dp)
        };
        self.rows.iter().copied().min_by(|a, b| d(a).total_cmp(&d(b)))
    }
}

/// Reference efficiency `1 − r_on/R_a`: the RF switch is the only loss in series with the antenna.
fn default_efficiency(bench: &Bench, r_a: f64) -> Result<f64> {
    let r_on = bench
        .netlist
        .switch(&bench.rf_switch)
        .ok_or_else(|| ExpError::Config(format!("unknown RF switch '{}'", bench.rf_switch)))?
        .r_on;
    let eta = 1.0 - r_on / r_a;
    if !(eta > 0.0) {
        return Err(ExpError::Config(format!("switch resistance {r_on} exceeds the input resistance {r_a}")));
    }
    Ok(eta)
}

pub fn lti_grid(cfg: &ExperimentConfig, seed: u64) -> Result<LtiGrid> {
    let bench = Bench::new(cfg)?;
    let radiate = bench.paths(TransmitterMode::Lti)?.radiate;
    let f0 = resonance(&bench.netlist, &radiate, &bench.source, bench.f_c)?;
    let omega = carrier_grid(bench.f_c)?;
    let z_a = omega
        .par_iter()
        .map(|&w| Ok(input_impedance(&bench.netlist, &radiate, &bench.source, w / TAU)?))
        .collect::<Result<Vec<Complex64>>>()?;
    let r_a = input_impedance(&bench.netlist, &radiate, &bench.source, f0)?.re;
    let eta = match cfg.efficiency {
        Some(e) => e,
        None => default_efficiency(&bench, r_a)?,
    };
    let antenna = AntennaParameters::new(omega, z_a, TAU * f0, eta)?;
    let r_s = bench.series_resistance();
    let loaded: Vec<Complex64> = antenna.z_a.iter().map(|z| z + r_s).collect();
    let loaded_q = q_from_impedance(&antenna.omega, &loaded, antenna.omega0, antenna.r_a + r_s)?;

    let n = cfg.cycles_per_symbol[0];
    let stream = prbs_stream(cfg, bench.f_c, n)?;
    let noise = cfg.snr_db.map(|snr| (snr, seed));

    // LTI source record with a charging preamble, since the transfer acts from rest.
    let t_c = bench.period();
    let t_start = preamble_end(&stream, (PREAMBLE_PER_Q * loaded_q).ceil() + MARGIN_CYCLES)?;
    let plan = build_schedule(&stream, TransmitterMode::Lti, &bench.paths(TransmitterMode::Lti)?, bench.steady.probe("v_a")?, t_start)?;
    let t_end = plan.t_end(&stream) + MARGIN_CYCLES * t_c;
    let src = synthesize_source(bench.v_cw, bench.f_c, &plan.phase_track, t_end)?;
    let count = (t_end / bench.dt()).floor() as usize + 1;
    let source = Waveform::new("source", 0.0, bench.dt(), (0..count).map(|i| src.value(i as f64 * bench.dt())).collect())?;
    let starts: Vec<f64> = (0..stream.len()).map(|k| plan.symbol_start(&stream, k)).collect();
    let measure = |w: &Waveform| -> damsim_core::Result<Measurement> {
        let c = receive(w, bench.f_c, &stream, &starts, noise).map_err(|e| match e {
            ExpError::Core(e) => e,
            other => damsim_core::Error::Consistency(other.to_string()),
        })?;
        Ok(Measurement { power: mean_symbol_power(&c), evm_db: evm_db(&c) })
    };
    let rows = grid_metrics(&antenna, &cfg.xi, &cfg.chi, &source, measure)?;

    let mut modes: Vec<(Option<f64>, TransmitterMode)> = vec![(None, TransmitterMode::Lti), (None, TransmitterMode::OcDam)];
    modes.extend(cfg.vdc_ratios.iter().map(|&r| (Some(r), bench.dc_mode(r))));
    let runs = modes
        .par_iter()
        .map(|&(_, m)| transmit(&bench, &stream, m, noise))
        .collect::<Result<Vec<_>>>()?;
    let reference = runs[0].power;
    let trajectory = modes
        .iter()
        .zip(&runs)
        .skip(1)
        .map(|(&(r, _), run)| TrajectoryPoint { vdc_ratio: r, avg_power_norm: run.power / reference, evm_db: run.evm_db })
        .collect();
    Ok(LtiGrid { antenna, loaded_q, rows, lti_circuit_evm_db: runs[0].evm_db, trajectory })
}

pub fn run_lti_grid(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
    let g = lti_grid(cfg, seed)?;
    out.write("grid.csv", |mut w| write_grid_csv(&g.rows, &mut w))?;
    out.write("combined.csv", |w| {
        writeln!(w, "series,xi,chi,vdc_ratio,avg_power_norm,evm_db")?;
        for r in &g.rows {
            writeln!(w, "lti-grid,{:e},{:e},,{:e},{:e}", r.xi, r.chi, r.avg_power_norm, r.evm_db)?;
        }
        writeln!(w, "lti-circuit,,,,{:e},{:e}", 1.0, g.lti_circuit_evm_db)?;
        for p in &g.trajectory {
            match p.vdc_ratio {
                Some(r) => writeln!(w, "dc-dam,,,{r:e},{:e},{:e}", p.avg_power_norm, p.evm_db)?,
                None => writeln!(w, "oc-dam,,,,{:e},{:e}", p.avg_power_norm, p.evm_db)?,
            }
        }
        Ok(())
    })?;
    let mut m = vec![
        ("r_a".to_string(), num(g.antenna.r_a)),
        ("efficiency".into(), num(g.antenna.eta)),
        ("resonance_hz".into(), num(g.antenna.omega0 / TAU)),
        ("loaded_q".into(), num(g.loaded_q)),
        ("lti_circuit_evm_db".into(), num(g.lti_circuit_evm_db)),
    ];
    if let Some(r) = g.grid_point(1.0, 1.0) {
        m.push(("grid_identity_evm_db".into(), num(r.evm_db)));
    }
    for p in &g.trajectory {
        if let (Some(r), Some(near)) = (p.vdc_ratio, g.nearest(p)) {
            m.push((format!("nearest.{r:.2}"), format!("xi={:e};chi={:e}", near.xi, near.chi)));
        }
    }
    Ok(m)
}
