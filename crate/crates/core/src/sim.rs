//! Exact piecewise-LTI simulation across switch events.
//!
//! Within a segment the state and the source companion states evolve together
//! under one augmented matrix, so sampling uses powers of `exp(A_aug·dt)` and
//! segment ends use one extra exponential.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::circuit::{assemble, CircuitState, StateSpaceModel};
use crate::error::{Error, Result};
use crate::netlist::{Netlist, SourceShape, SourceWaveform, SwitchConfiguration};

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub label: String,
    pub start: f64,
    pub sample_interval: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn new(label: &str, start: f64, sample_interval: f64, samples: Vec<f64>) -> Result<Waveform> {
        if !(sample_interval > 0.0 && sample_interval.is_finite()) {
            return Err(Error::Validation("sample interval must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("waveform '{label}' has non-finite samples")));
        }
        Ok(Waveform { label: label.to_string(), start, sample_interval, samples })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.sample_interval
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at_or_after(&self, t: f64) -> usize {
        let x = ((t - self.start) / self.sample_interval).ceil().max(0.0) as usize;
        let mut i = x;
        while i > 0 && self.time(i - 1) >= t {
            i -= 1;
        }
        while i < self.len() && self.time(i) < t {
            i += 1;
        }
        i
    }

    /// Samples with `t0 <= t < t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Waveform {
        let i0 = self.index_at_or_after(t0);
        let i1 = self.index_at_or_after(t1).max(i0);
        Waveform {
            label: self.label.clone(),
            start: self.time(i0),
            sample_interval: self.sample_interval,
            samples: self.samples[i0..i1].to_vec(),
        }
    }
}

/// Write waveforms on a shared time base as `time_s,<label>...`.
pub fn write_waveforms_csv<W: Write>(out: &mut W, waveforms: &[&Waveform]) -> std::io::Result<()> {
    let first = match waveforms.first() {
        Some(w) => w,
        None => return Ok(()),
    };
    write!(out, "time_s")?;
    for w in waveforms {
        write!(out, ",{}", w.label)?;
    }
    writeln!(out)?;
    let n = waveforms.iter().map(|w| w.len()).min().unwrap_or(0);
    for i in 0..n {
        write!(out, "{}", first.time(i))?;
        for w in waveforms {
            write!(out, ",{}", w.samples[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub configuration: SwitchConfiguration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    pub initial: SwitchConfiguration,
    /// Strictly increasing in time.
    pub events: Vec<SwitchEvent>,
}

impl SwitchSchedule {
    pub fn constant(configuration: SwitchConfiguration) -> Self {
        Self { initial: configuration, events: Vec::new() }
    }

    /// Configuration in force at `t` (events apply from their own instant onward).
    pub fn configuration_at(&self, t: f64) -> &SwitchConfiguration {
        let idx = self.events.partition_point(|e| e.time <= t);
        if idx == 0 {
            &self.initial
        } else {
            &self.events[idx - 1].configuration
        }
    }

    pub fn validate(&self, t_start: f64, t_end: f64) -> Result<()> {
        for w in self.events.windows(2) {
            if w[1].time == w[0].time {
                return Err(Error::Schedule(format!("two events at t = {} s", w[0].time)));
            }
            if !(w[1].time > w[0].time) {
                return Err(Error::Schedule("event times must be strictly increasing".into()));
            }
        }
        for e in &self.events {
            if !(e.time >= t_start && e.time <= t_end) {
                return Err(Error::Schedule(format!("event at {} s lies outside [{t_start}, {t_end}]", e.time)));
            }
        }
        Ok(())
    }
}

/// Per-source waveform overrides keyed by source id.
pub type SourceDrive = BTreeMap<String, SourceWaveform>;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub t_start: f64,
    pub t_end: f64,
    pub sample_interval: f64,
    /// Samples before this instant are propagated but not stored.
    pub record_from: Option<f64>,
    /// Probe names to record; `None` records every netlist probe.
    pub probes: Option<Vec<String>>,
    /// Also store the element state at every recorded sample.
    pub record_states: bool,
}

impl SimOptions {
    pub fn new(t_end: f64, sample_interval: f64) -> Self {
        Self { t_start: 0.0, t_end, sample_interval, record_from: None, probes: None, record_states: false }
    }
}

#[derive(Debug, Clone)]
pub struct EventRecord {
    pub time: f64,
    pub before: CircuitState,
    pub after: CircuitState,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub waveforms: Vec<Waveform>,
    pub final_state: CircuitState,
    pub events: Vec<EventRecord>,
    /// Present when [`SimOptions::record_states`] is set; aligned with waveform samples.
    pub states: Vec<CircuitState>,
    /// Total stored energy at each recorded sample when states are recorded.
    pub energy: Vec<f64>,
}

impl SimOutput {
    pub fn waveform(&self, label: &str) -> Option<&Waveform> {
        self.waveforms.iter().find(|w| w.label == label)
    }
}

/// Companion description of one source over one segment.
#[derive(Clone, Copy)]
enum Companion {
    Sinusoid { omega: f64 },
    Dc,
    Ramp,
}

impl Companion {
    fn dim(&self) -> usize {
        match self {
            Companion::Dc => 1,
            _ => 2,
        }
    }

    fn key(&self) -> (u8, u64) {
        match self {
            Companion::Sinusoid { omega } => (0, omega.to_bits()),
            Companion::Dc => (1, 0),
            Companion::Ramp => (2, 0),
        }
    }
}

fn companion_of(shape: &SourceShape) -> Companion {
    match shape {
        SourceShape::Sinusoid { frequency, .. } => Companion::Sinusoid { omega: std::f64::consts::TAU * frequency },
        SourceShape::Dc { .. } => Companion::Dc,
        SourceShape::Ramp { .. } => Companion::Ramp,
    }
}

/// Initial companion values at `t` for a shape whose interval starts at `seg_start`.
fn companion_init(shape: &SourceShape, t: f64, seg_start: f64) -> Vec<f64> {
    match *shape {
        SourceShape::Sinusoid { amplitude, frequency, phase } => {
            let arg = std::f64::consts::TAU * frequency * t + phase;
            vec![amplitude * arg.cos(), amplitude * arg.sin()]
        }
        SourceShape::Dc { level } => vec![level],
        SourceShape::Ramp { value, slope } => vec![value + slope * (t - seg_start), slope],
    }
}

struct Augmented {
    a: DMatrix<f64>,
    /// Input values `u = mu · w_companion`.
    mu: DMatrix<f64>,
    step: DMatrix<f64>,
}

fn build_augmented(model: &StateSpaceModel, comps: &[Companion], dt: f64) -> Augmented {
    let n = model.order();
    let m = comps.len();
    let nz: usize = comps.iter().map(|c| c.dim()).sum();
    let mut s = DMatrix::<f64>::zeros(nz, nz);
    let mut mu = DMatrix::<f64>::zeros(m, nz);
    let mut md = DMatrix::<f64>::zeros(m, nz);
    let mut off = 0;
    for (k, c) in comps.iter().enumerate() {
        match *c {
            Companion::Sinusoid { omega } => {
                s[(off, off + 1)] = -omega;
                s[(off + 1, off)] = omega;
                mu[(k, off)] = 1.0;
                md[(k, off + 1)] = -omega;
            }
            Companion::Dc => {
                mu[(k, off)] = 1.0;
            }
            Companion::Ramp => {
                s[(off, off + 1)] = 1.0;
                mu[(k, off)] = 1.0;
                md[(k, off + 1)] = 1.0;
            }
        }
        off += c.dim();
    }
    let mut a = DMatrix::<f64>::zeros(n + nz, n + nz);
    a.view_mut((0, 0), (n, n)).copy_from(&model.a);
    a.view_mut((0, n), (n, nz)).copy_from(&(&model.b * &mu + &model.b_dot * &md));
    a.view_mut((n, n), (nz, nz)).copy_from(&s);
    let step = (&a * dt).exp();
    Augmented { a, mu, step }
}

/// Simulate `netlist` under `schedule` from `initial` (zero when `None`).
pub fn simulate(
    netlist: &Netlist,
    schedule: &SwitchSchedule,
    drive: &SourceDrive,
    initial: Option<&CircuitState>,
    opts: &SimOptions,
) -> Result<SimOutput> {
    let dt = opts.sample_interval;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation("sample interval must be positive".into()));
    }
    if !(opts.t_end > opts.t_start) {
        return Err(Error::Validation("t_end must exceed t_start".into()));
    }
    schedule.validate(opts.t_start, opts.t_end)?;
    for id in drive.keys() {
        if netlist.source(id).is_none() {
            return Err(Error::Validation(format!("drive names unknown source '{id}'")));
        }
    }
    let waveforms: Vec<SourceWaveform> = netlist
        .sources
        .iter()
        .map(|s| drive.get(&s.id).cloned().unwrap_or_else(|| s.waveform.clone()))
        .collect();

    let probe_names: Vec<String> = match &opts.probes {
        Some(p) => p.clone(),
        None => netlist.probes.iter().map(|p| p.name.clone()).collect(),
    };

    // Segment boundaries: switch events and source breakpoints.
    let mut cuts: Vec<f64> = schedule.events.iter().map(|e| e.time).collect();
    for w in &waveforms {
        cuts.extend(w.breakpoints());
    }
    cuts.retain(|&t| t > opts.t_start && t < opts.t_end);
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    cuts.dedup();
    let mut bounds = vec![opts.t_start];
    bounds.extend(cuts);
    bounds.push(opts.t_end);

    let mut models: HashMap<SwitchConfiguration, StateSpaceModel> = HashMap::new();
    let mut steps: HashMap<(SwitchConfiguration, Vec<(u8, u64)>), Augmented> = HashMap::new();

    let n_samples = ((opts.t_end - opts.t_start) / dt + 1e-9).floor() as usize + 1;
    let sample_time = |j: usize| opts.t_start + j as f64 * dt;
    let record_from = opts.record_from.unwrap_or(f64::NEG_INFINITY);

    let mut out_samples: Vec<Vec<f64>> = vec![Vec::new(); probe_names.len()];
    let mut first_recorded: Option<usize> = None;
    let mut states = Vec::new();
    let mut energy = Vec::new();
    let mut events = Vec::new();

    let mut current_cfg = schedule.configuration_at(opts.t_start).clone();
    let mut x: Option<DVector<f64>> = None;
    let mut u_end = DVector::<f64>::zeros(waveforms.len());
    let mut next_sample = 0usize;
    let mut final_state = CircuitState::new(opts.t_end);

    for seg in 0..bounds.len() - 1 {
        let (t0, t1) = (bounds[seg], bounds[seg + 1]);
        let last = seg == bounds.len() - 2;
        let cfg = schedule.configuration_at(t0).clone();
        if !models.contains_key(&cfg) {
            models.insert(cfg.clone(), assemble(netlist, &cfg)?);
        }
        let shapes: Vec<(SourceShape, f64)> = waveforms.iter().map(|w| w.shape_at(t0)).collect();
        let u_at = |t: f64| -> DVector<f64> { DVector::from_iterator(shapes.len(), shapes.iter().map(|(s, st)| s.value(t, *st))) };

        // State entering this segment.
        let model = &models[&cfg];
        let x0 = match x.take() {
            None => {
                let init = initial.cloned().unwrap_or_else(|| CircuitState::new(t0));
                model.state_vector(&init, &u_at(t0))
            }
            Some(prev) if cfg != current_cfg => {
                let old = &models[&current_cfg];
                let u_before = u_end.clone();
                let before = old.circuit_state(t0, &prev, &u_before);
                let next = model.state_vector(&before, &u_at(t0));
                let after = model.circuit_state(t0, &next, &u_at(t0));
                events.push(EventRecord { time: t0, before, after });
                next
            }
            Some(prev) => prev,
        };
        current_cfg = cfg.clone();

        let mut out_rows = Vec::with_capacity(probe_names.len());
        for name in &probe_names {
            let probe = netlist
                .probe(name)
                .ok_or_else(|| Error::Probe { probe: name.clone(), segment_start: t0 })?;
            let rows = model
                .voltage_rows(&probe.nodes[0], &probe.nodes[1])
                .map_err(|_| Error::Probe { probe: name.clone(), segment_start: t0 })?;
            out_rows.push(rows);
        }

        let comps: Vec<Companion> = shapes.iter().map(|(s, _)| companion_of(s)).collect();
        let key = (cfg.clone(), comps.iter().map(|c| c.key()).collect::<Vec<_>>());
        if !steps.contains_key(&key) {
            steps.insert(key.clone(), build_augmented(model, &comps, dt));
        }
        let aug = &steps[&key];
        let n = model.order();
        let mut w = DVector::<f64>::zeros(aug.a.nrows());
        w.rows_mut(0, n).copy_from(&x0);
        let mut off = n;
        for (shape, st) in &shapes {
            for v in companion_init(shape, t0, *st) {
                w[off] = v;
                off += 1;
            }
        }

        let mut t_w = t0;
        let mut first = true;
        while next_sample < n_samples {
            let ts = sample_time(next_sample);
            if ts < t0 {
                next_sample += 1;
                continue;
            }
            if ts > t1 || (ts == t1 && !last) {
                break;
            }
            w = if first {
                first = false;
                if ts == t_w {
                    w
                } else {
                    (&aug.a * (ts - t_w)).exp() * w
                }
            } else {
                &aug.step * w
            };
            t_w = ts;
            if ts >= record_from {
                first_recorded.get_or_insert(next_sample);
                let xs = w.rows(0, n).into_owned();
                let u = &aug.mu * w.rows(n, w.nrows() - n);
                for (k, (c, d)) in out_rows.iter().enumerate() {
                    out_samples[k].push(c.dot(&xs) + d.dot(&u));
                }
                if opts.record_states {
                    energy.push(model.energy(&xs, &u));
                    states.push(model.circuit_state(ts, &xs, &u));
                }
            }
            next_sample += 1;
        }
        if t1 > t_w {
            w = (&aug.a * (t1 - t_w)).exp() * w;
        }
        let xs = w.rows(0, n).into_owned();
        u_end = &aug.mu * w.rows(n, w.nrows() - n);
        if last {
            final_state = model.circuit_state(t1, &xs, &u_end);
        }
        x = Some(xs);
    }

    let start = sample_time(first_recorded.unwrap_or(0));
    let waveforms = probe_names
        .iter()
        .zip(out_samples)
        .map(|(name, s)| Waveform::new(name, start, dt, s))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Validation(msg) => Error::Conditioning(msg),
            other => other,
        })?;
    Ok(SimOutput { waveforms, final_state, events, states, energy })
}
