//! PRBS and QPSK symbol generation, and conversion of symbol streams into
//! phase-switched source waveforms and peak-aligned switch schedules.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::netlist::{Netlist, PiecewiseSegment, SourceShape, SourceWaveform, SwitchConfiguration, SwitchKind, SwitchPosition};
use crate::phasor::peak_at_or_before;
use crate::sim::{SwitchEvent, SwitchSchedule};

/// Feedback taps of a maximal-length 8-bit register, `x^8 + x^6 + x^5 + x^4 + 1`.
pub const MAXIMAL_TAPS_8: [u32; 4] = [8, 6, 5, 4];

/// QPSK alphabet indexed by constellation label.
pub const QPSK_PHASES: [f64; 4] = [FRAC_PI_4, 3.0 * FRAC_PI_4, 5.0 * FRAC_PI_4, 7.0 * FRAC_PI_4];

/// Phase differences below this are treated as no transition.
const PHASE_EPS: f64 = 1e-9;

fn lfsr_step(state: &mut u32, register_bits: u32, taps: &[u32]) -> u8 {
    let out = (*state & 1) as u8;
    let fb = taps.iter().fold(0u32, |acc, &t| acc ^ ((*state >> (register_bits - t)) & 1));
    *state = (*state >> 1) | (fb << (register_bits - 1));
    out
}

/// Number of steps before a Fibonacci register returns to `seed`.
pub fn lfsr_period(register_bits: u32, taps: &[u32], seed: u32) -> Result<u64> {
    check_register(register_bits, taps, seed)?;
    let mut s = seed;
    let mut n = 0u64;
    loop {
        lfsr_step(&mut s, register_bits, taps);
        n += 1;
        if s == seed {
            return Ok(n);
        }
    }
}

fn check_register(register_bits: u32, taps: &[u32], seed: u32) -> Result<()> {
    if !(2..=32).contains(&register_bits) {
        return Err(Error::Validation(format!("register length {register_bits} outside 2..=32")));
    }
    if !taps.contains(&register_bits) || taps.iter().any(|&t| t == 0 || t > register_bits) {
        return Err(Error::Validation(format!("taps {taps:?} must lie in 1..={register_bits} and include it")));
    }
    let mask = if register_bits == 32 { u32::MAX } else { (1u32 << register_bits) - 1 };
    if seed & !mask != 0 {
        return Err(Error::Validation(format!("seed {seed:#x} wider than {register_bits} bits")));
    }
    if seed & mask == 0 {
        return Err(Error::DegenerateSeed);
    }
    Ok(())
}

/// Output bits of a right-shifting Fibonacci LFSR.
///
/// The output is bit 0; tap `t` reads bit `register_bits − t`. Registers up
/// to 20 bits are checked for maximal period.
pub fn prbs_sequence(register_bits: u32, taps: &[u32], seed: u32, n_bits: usize) -> Result<Vec<u8>> {
    check_register(register_bits, taps, seed)?;
    if register_bits <= 20 {
        let period = lfsr_period(register_bits, taps, seed)?;
        if period != (1u64 << register_bits) - 1 {
            return Err(Error::Validation(format!("taps {taps:?} give period {period}, not maximal")));
        }
    }
    let mut s = seed;
    Ok((0..n_bits).map(|_| lfsr_step(&mut s, register_bits, taps)).collect())
}

/// QPSK symbols on a carrier, `cycles_per_symbol` carrier periods each.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    /// Constellation labels, indices into [`QPSK_PHASES`].
    pub labels: Vec<usize>,
    pub phases: Vec<f64>,
    pub carrier_period: f64,
    pub cycles_per_symbol: u32,
}

impl SymbolStream {
    pub fn new(labels: Vec<usize>, carrier_frequency: f64, cycles_per_symbol: u32) -> Result<SymbolStream> {
        if !(carrier_frequency > 0.0 && carrier_frequency.is_finite()) {
            return Err(Error::Validation("carrier frequency must be positive".into()));
        }
        if cycles_per_symbol == 0 {
            return Err(Error::Validation("cycles per symbol must be at least 1".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= QPSK_PHASES.len()) {
            return Err(Error::Validation(format!("symbol label {l} outside the QPSK alphabet")));
        }
        let phases = labels.iter().map(|&l| QPSK_PHASES[l]).collect();
        Ok(SymbolStream { labels, phases, carrier_period: 1.0 / carrier_frequency, cycles_per_symbol })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn carrier_frequency(&self) -> f64 {
        1.0 / self.carrier_period
    }

    pub fn symbol_period(&self) -> f64 {
        self.carrier_period * self.cycles_per_symbol as f64
    }

    pub fn symbol_rate(&self) -> f64 {
        1.0 / self.symbol_period()
    }

    /// Gray-coded dibit of symbol `k`.
    pub fn dibit(&self, k: usize) -> (u8, u8) {
        dibit_of_label(self.labels[k])
    }

    /// Unit-amplitude constellation point of symbol `k`.
    pub fn point(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.phases[k])
    }

    /// Boundaries where the phase changes.
    pub fn transitions(&self) -> usize {
        self.labels.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Rows `index,phase_rad,bit0,bit1`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "index,phase_rad,bit0,bit1")?;
        for k in 0..self.len() {
            let (b0, b1) = self.dibit(k);
            writeln!(out, "{k},{:e},{b0},{b1}", self.phases[k])?;
        }
        Ok(())
    }
}

fn dibit_of_label(label: usize) -> (u8, u8) {
    match label {
        0 => (0, 0),
        1 => (0, 1),
        2 => (1, 1),
        _ => (1, 0),
    }
}

/// Gray mapping 00→π/4, 01→3π/4, 11→5π/4, 10→7π/4.
pub fn map_qpsk(bits: &[u8], carrier_frequency: f64, cycles_per_symbol: u32) -> Result<SymbolStream> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::Length(bits.len()));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::Validation(format!("bit value {b} is not 0 or 1")));
    }
    let labels = bits
        .chunks(2)
        .map(|d| match (d[0], d[1]) {
            (0, 0) => 0,
            (0, 1) => 1,
            (1, 1) => 2,
            _ => 3,
        })
        .collect();
    SymbolStream::new(labels, carrier_frequency, cycles_per_symbol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransmitterMode {
    /// Source phase switches at the nominal boundaries, the RF path stays closed.
    Lti,
    /// RF path opens for the gap, leaving the antenna floating.
    OcDam,
    /// RF path opens for the gap while the DC path holds the network at `v_dc`.
    DcDam { v_dc: f64 },
}

impl TransmitterMode {
    pub fn is_dam(&self) -> bool {
        !matches!(self, TransmitterMode::Lti)
    }
}

/// Switch configurations used while radiating and during gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPaths {
    pub radiate: SwitchConfiguration,
    pub hold: SwitchConfiguration,
}

impl SwitchPaths {
    /// Paths for a netlist whose RF path is switch `rf` and, for DC-DAM,
    /// whose DC path is switch `dc` (or the second throw of an SPDT `rf`).
    pub fn for_mode(netlist: &Netlist, mode: TransmitterMode, rf: &str, dc: Option<&str>) -> Result<SwitchPaths> {
        let rf_sw = netlist
            .switch(rf)
            .ok_or_else(|| Error::Validation(format!("unknown RF switch '{rf}'")))?;
        let spdt = matches!(rf_sw.kind, SwitchKind::Spdt { .. });
        let mut radiate = netlist.uniform_configuration(SwitchPosition::Off);
        radiate.0.insert(rf.into(), if spdt { SwitchPosition::Throw(0) } else { SwitchPosition::On });
        let mut hold = netlist.uniform_configuration(SwitchPosition::Off);
        match mode {
            TransmitterMode::Lti | TransmitterMode::OcDam => {
                if spdt {
                    return Err(Error::Validation(format!("SPDT '{rf}' has no open-circuit throw")));
                }
            }
            TransmitterMode::DcDam { v_dc } => {
                if !v_dc.is_finite() {
                    return Err(Error::Validation("v_dc must be finite".into()));
                }
                if spdt {
                    hold.0.insert(rf.into(), SwitchPosition::Throw(1));
                } else {
                    let dc = dc.ok_or_else(|| Error::Validation("DC-DAM needs a DC path switch".into()))?;
                    if netlist.switch(dc).is_none() {
                        return Err(Error::Validation(format!("unknown DC switch '{dc}'")));
                    }
                    hold.0.insert(dc.into(), SwitchPosition::On);
                }
            }
        }
        netlist.check_configuration(&radiate)?;
        netlist.check_configuration(&hold)?;
        Ok(SwitchPaths { radiate, hold })
    }
}

/// Source phase `phase` applies from `time` onward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseStep {
    pub time: f64,
    pub phase: f64,
}

/// One OFF interval between two radiating symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    /// Index of the symbol that starts after the gap.
    pub symbol: usize,
    pub open: f64,
    pub close: f64,
    /// Phase retardation `(θ_old − θ_new) mod 2π`.
    pub phase_delay: f64,
}

impl Gap {
    pub fn duration(&self) -> f64 {
        self.close - self.open
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulationPlan {
    pub schedule: SwitchSchedule,
    /// Starts at time zero with the first symbol's phase.
    pub phase_track: Vec<PhaseStep>,
    pub gaps: Vec<Gap>,
    pub t_start: f64,
    pub mode: TransmitterMode,
}

impl ModulationPlan {
    /// Nominal start of symbol `k`.
    pub fn symbol_start(&self, stream: &SymbolStream, k: usize) -> f64 {
        self.t_start + k as f64 * stream.symbol_period()
    }

    pub fn t_end(&self, stream: &SymbolStream) -> f64 {
        self.symbol_start(stream, stream.len())
    }
}

/// `(θ_old − θ_new) mod 2π` in `[0, 2π)`, with near-multiples of 2π mapped to 0.
pub fn phase_delay(theta_old: f64, theta_new: f64) -> f64 {
    let d = (theta_old - theta_new).rem_euclid(TAU);
    if d < PHASE_EPS || TAU - d < PHASE_EPS {
        0.0
    } else {
        d
    }
}

/// First instant at or after `cycles` carrier periods where the source,
/// running at the first symbol's phase, is at a maximum.
pub fn preamble_end(stream: &SymbolStream, cycles: f64) -> Result<f64> {
    let theta0 = *stream.phases.first().ok_or_else(|| Error::Validation("empty symbol stream".into()))?;
    let t_c = stream.carrier_period;
    let base = -theta0.rem_euclid(TAU) / TAU * t_c;
    let k = ((cycles * t_c - base) / t_c).ceil();
    Ok(base + k * t_c)
}

/// Switch schedule and source phase track for `stream` beginning at `t_start`.
///
/// `va_phasor` is the terminal voltage phasor for a zero-phase source. At each
/// boundary with a phase change the RF path opens at the last terminal peak at
/// or before the boundary, the source switches to the new phase at that
/// instant, and the path closes after `(θ_old − θ_new mod 2π)/ω`.
pub fn build_schedule(
    stream: &SymbolStream,
    mode: TransmitterMode,
    paths: &SwitchPaths,
    va_phasor: Complex64,
    t_start: f64,
) -> Result<ModulationPlan> {
    if stream.is_empty() {
        return Err(Error::Validation("empty symbol stream".into()));
    }
    if !(t_start > 0.0 && t_start.is_finite()) {
        return Err(Error::Validation("symbols must start after a positive charging interval".into()));
    }
    let f_c = stream.carrier_frequency();
    let t_s = stream.symbol_period();
    let omega = TAU * f_c;
    let mut phase_track = vec![PhaseStep { time: 0.0, phase: stream.phases[0] }];
    let mut gaps = Vec::new();
    let mut events = Vec::new();
    let mut last_close = f64::NEG_INFINITY;
    for k in 1..stream.len() {
        let (old, new) = (stream.phases[k - 1], stream.phases[k]);
        let delay = phase_delay(old, new);
        if delay == 0.0 {
            continue;
        }
        let boundary = t_start + k as f64 * t_s;
        if !mode.is_dam() {
            phase_track.push(PhaseStep { time: boundary, phase: new });
            continue;
        }
        let gap = delay / omega;
        if gap >= t_s {
            return Err(Error::Scheduling(format!(
                "gap {gap:e} s does not fit in symbol period {t_s:e} s"
            )));
        }
        let open = peak_at_or_before(va_phasor, old, f_c, boundary)?;
        if open <= last_close || open <= 0.0 {
            return Err(Error::Scheduling(format!(
                "opening at {open:e} s for symbol {k} overlaps the previous gap"
            )));
        }
        let close = open + gap;
        phase_track.push(PhaseStep { time: open, phase: new });
        events.push(SwitchEvent { time: open, configuration: paths.hold.clone() });
        events.push(SwitchEvent { time: close, configuration: paths.radiate.clone() });
        gaps.push(Gap { symbol: k, open, close, phase_delay: delay });
        last_close = close;
    }
    Ok(ModulationPlan {
        schedule: SwitchSchedule { initial: paths.radiate.clone(), events },
        phase_track,
        gaps,
        t_start,
        mode,
    })
}

/// Source `V_cw·cos(2πf_c·t + θ(t))` with `θ` piecewise constant along `phase_track`.
pub fn synthesize_source(v_cw: f64, f_c: f64, phase_track: &[PhaseStep], t_end: f64) -> Result<SourceWaveform> {
    if !(v_cw.is_finite() && f_c > 0.0 && f_c.is_finite()) {
        return Err(Error::Validation("source amplitude and frequency must be finite and positive".into()));
    }
    if phase_track.is_empty() {
        return Err(Error::Validation("empty phase track".into()));
    }
    if phase_track.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::Validation("phase steps must have increasing times".into()));
    }
    let segments = phase_track
        .iter()
        .filter(|p| p.time <= t_end || p.time == phase_track[0].time)
        .map(|p| PiecewiseSegment {
            start: p.time,
            shape: SourceShape::Sinusoid { amplitude: v_cw, frequency: f_c, phase: p.phase },
        })
        .collect();
    Ok(SourceWaveform::Piecewise(segments))
}

/// Rows `time_s,switch_id,position`; the initial configuration is listed at `t0`.
pub fn write_schedule_csv<W: Write>(schedule: &SwitchSchedule, t0: f64, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "time_s,switch_id,position")?;
    for (id, pos) in &schedule.initial.0 {
        writeln!(out, "{t0:e},{id},{pos}")?;
    }
    for ev in &schedule.events {
        for (id, pos) in &ev.configuration.0 {
            writeln!(out, "{:e},{id},{pos}", ev.time)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dibits_round_trip() {
        let s = map_qpsk(&[0, 0, 0, 1, 1, 1, 1, 0], 1e6, 4).unwrap();
        assert_eq!(s.labels, vec![0, 1, 2, 3]);
        assert_eq!((0..4).map(|k| s.dibit(k)).collect::<Vec<_>>(), vec![(0, 0), (0, 1), (1, 1), (1, 0)]);
    }

    #[test]
    fn phase_delay_wraps() {
        assert_eq!(phase_delay(1.0, 1.0 + TAU), 0.0);
        assert!((phase_delay(FRAC_PI_4, 3.0 * FRAC_PI_4) - 1.5 * std::f64::consts::PI).abs() < 1e-12);
    }
}
