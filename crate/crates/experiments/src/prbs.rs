//! PRBS-driven QPSK transmissions and their constellation metrics.


use damsim_core::dsp::{add_awgn, cluster_sd, downconvert, evm_db, mean_symbol_power, sample_constellation, Constellation, LowpassSpec};
use damsim_core::modulator::{map_qpsk, prbs_sequence, preamble_end, SymbolStream, TransmitterMode};
use damsim_core::sim::Waveform;
use rayon::prelude::*;

use crate::bench::{trace, Bench};
use crate::config::{mode_label, transmitter_mode, ExperimentConfig, ModeName};
use crate::error::Result;
use crate::report::{num, OutputDir};

/// Carrier cycles simulated on each side of the symbol stream.
pub const MARGIN_CYCLES: f64 = 10.0;

/// Symbols shown in the time-domain excerpt.
pub const EXCERPT_SYMBOLS: usize = 8;

/// QPSK symbol stream from the configured PRBS.
pub fn prbs_stream(cfg: &ExperimentConfig, f_c: f64, cycles_per_symbol: u32) -> Result<SymbolStream> {
    let p = &cfg.prbs;
    let bits = prbs_sequence(p.register_bits, &p.taps, p.seed, p.bits)?;
    Ok(map_qpsk(&bits, f_c, cycles_per_symbol)?)
}

/// One transmission through the receiver chain.
#[derive(Debug, Clone)]
pub struct StreamRun {
    pub mode: TransmitterMode,
    pub constellation: Constellation,
    pub v_rad: Waveform,
    pub evm_db: f64,
    pub sd: f64,
    /// Mean raw symbol power.
    pub power: f64,
}

impl StreamRun {
    /// Smallest distance between normalized cluster means.
    pub fn min_mean_distance(&self) -> f64 {
        let means: Vec<_> = self.constellation.means().into_iter().flatten().collect();
        let mut d = f64::INFINITY;
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                d = d.min((means[i] - means[j]).norm());
            }
        }
        d
    }
}

/// Simulate `stream` in `mode` from steady state and measure its constellation.
pub fn transmit(bench: &Bench, stream: &SymbolStream, mode: TransmitterMode, noise: Option<(f64, u64)>) -> Result<StreamRun> {
    let t_c = bench.period();
    let t_start = preamble_end(stream, 2.0 * MARGIN_CYCLES)?;
    let t_end = t_start + stream.len() as f64 * stream.symbol_period();
    let window = (t_start - MARGIN_CYCLES * t_c, t_end + MARGIN_CYCLES * t_c);
    let (plan, out) = bench.simulate_stream(stream, mode, t_start, window, &["v_rad"])?;
    let v_rad = trace(&out, "v_rad")?.clone();
    let constellation = receive(&v_rad, bench.f_c, stream, &(0..stream.len()).map(|k| plan.symbol_start(stream, k)).collect::<Vec<_>>(), noise)?;
    Ok(StreamRun {
        mode,
        evm_db: evm_db(&constellation),
        sd: cluster_sd(&constellation),
        power: mean_symbol_power(&constellation),
        constellation,
        v_rad,
    })
}

/// Downconvert, optionally add noise, and sample at the best intra-symbol offset.
pub fn receive(
    signal: &Waveform,
    f_c: f64,
    stream: &SymbolStream,
    symbol_starts: &[f64],
    noise: Option<(f64, u64)>,
) -> Result<Constellation> {
    let mut iq = downconvert(signal, f_c, &LowpassSpec::for_carrier(f_c))?;
    if let Some((snr_db, seed)) = noise {
        iq = add_awgn(&iq, snr_db, seed)?;
    }
    Ok(sample_constellation(&iq, symbol_starts, stream.symbol_period(), &stream.labels)?)
}

/// Every `(N, mode)` run of a PRBS suite, grouped by `N`.
#[derive(Debug, Clone)]
pub struct PrbsSuite {
    pub bench: Bench,
    /// Config order with `N` outermost.
    pub runs: Vec<PrbsRow>,
}

#[derive(Debug, Clone)]
pub struct PrbsRow {
    pub cycles_per_symbol: u32,
    pub label: String,
    pub family: ModeName,
    pub ratio: Option<f64>,
    pub run: StreamRun,
    /// Mean symbol power over the LTI run at the same `N`.
    pub avg_power_norm: f64,
}

impl PrbsSuite {
    pub fn row(&self, n: u32, label: &str) -> Option<&PrbsRow> {
        self.runs.iter().find(|r| r.cycles_per_symbol == n && r.label == label)
    }
}

pub fn prbs_suite(cfg: &ExperimentConfig, seed: u64) -> Result<PrbsSuite> {
    let bench = Bench::new(cfg)?;
    let mut modes = cfg.expanded_modes();
    if !modes.iter().any(|(m, _)| *m == ModeName::Lti) {
        modes.insert(0, (ModeName::Lti, None));
    }
    let jobs: Vec<(u32, ModeName, Option<f64>)> = cfg
        .cycles_per_symbol
        .iter()
        .flat_map(|&n| modes.iter().map(move |&(m, r)| (n, m, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(n, m, r))| {
            let stream = prbs_stream(cfg, bench.f_c, n)?;
            let noise = cfg.snr_db.map(|snr| (snr, seed.wrapping_add(i as u64)));
            transmit(&bench, &stream, transmitter_mode(m, r.map(|r| r * bench.stored)), noise)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (&(n, m, r), run) in jobs.iter().zip(runs) {
        rows.push(PrbsRow { cycles_per_symbol: n, label: mode_label(m, r), family: m, ratio: r, run, avg_power_norm: f64::NAN });
    }
    for i in 0..rows.len() {
        let n = rows[i].cycles_per_symbol;
        let reference = rows
            .iter()
            .find(|x| x.cycles_per_symbol == n && x.family == ModeName::Lti)
            .map(|x| x.run.power)
            .expect("an LTI run exists for every N");
        rows[i].avg_power_norm = rows[i].run.power / reference;
    }
    // Drop the implicit LTI reference when the config did not ask for it.
    if !cfg.modes.contains(&ModeName::Lti) {
        rows.retain(|r| r.family != ModeName::Lti);
    }
    Ok(PrbsSuite { bench, runs: rows })
}

pub fn run_prbs_evm(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
    let suite = prbs_suite(cfg, seed)?;
    let bench = &suite.bench;
    for r in &suite.runs {
        out.write(&format!("constellation_n{}_{}.csv", r.cycles_per_symbol, r.label), |mut w| {
            r.run.constellation.write_csv(&mut w)
        })?;
    }
    out.write("metrics.csv", |w| {
        writeln!(w, "cycles_per_symbol,mode,vdc_ratio,evm_db,sd,avg_power_norm,min_mean_distance,offset_s")?;
        for r in &suite.runs {
            let ratio = r.ratio.map(|x| format!("{x:e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{ratio},{:e},{:e},{:e},{:e},{:e}",
                r.cycles_per_symbol,
                r.family.name(),
                r.run.evm_db,
                r.run.sd,
                r.avg_power_norm,
                r.run.min_mean_distance(),
                r.run.constellation.offset
            )?;
        }
        Ok(())
    })?;
    for &n in &cfg.cycles_per_symbol {
        let rows: Vec<&PrbsRow> = suite.runs.iter().filter(|r| r.cycles_per_symbol == n).collect();
        let stream = prbs_stream(cfg, bench.f_c, n)?;
        let t_start = preamble_end(&stream, 2.0 * MARGIN_CYCLES)?;
        let t_stop = t_start + EXCERPT_SYMBOLS.min(stream.len()) as f64 * stream.symbol_period();
        let first = &rows[0].run.v_rad;
        out.write(&format!("trace_n{n}.csv"), |w| {
            write!(w, "time_s")?;
            for r in &rows {
                write!(w, ",{}", r.label)?;
            }
            writeln!(w)?;
            for i in first.index_at_or_after(t_start)..first.index_at_or_after(t_stop) {
                write!(w, "{:e}", first.time(i))?;
                for r in &rows {
                    write!(w, ",{:e}", r.run.v_rad.samples[i] / bench.rad_peak)?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
    }
    let mut m = vec![("carrier_hz".to_string(), num(bench.f_c)), ("source_resistance".into(), num(bench.series_resistance()))];
    for r in &suite.runs {
        m.push((format!("evm_db.n{}.{}", r.cycles_per_symbol, r.label), num(r.run.evm_db)));
        m.push((format!("sd.n{}.{}", r.cycles_per_symbol, r.label), num(r.run.sd)));
    }
    Ok(m)
}
