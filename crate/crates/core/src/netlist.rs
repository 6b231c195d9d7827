//! Circuit description: passive elements, sources, switches and probes.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::units::{parse_quantity, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Resistor,
    Capacitor,
    Inductor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    pub kind: ElementKind,
    /// Ohm, farad or henry according to `kind`.
    pub value: f64,
    pub nodes: [String; 2],
}

/// Waveform of one source over an interval where it is a single analytic shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceShape {
    /// `amplitude * cos(2π·frequency·t + phase)` with absolute time `t`.
    Sinusoid { amplitude: f64, frequency: f64, phase: f64 },
    Dc { level: f64 },
    /// `value + slope·(t − start)` where `start` is the segment start.
    Ramp { value: f64, slope: f64 },
}

impl SourceShape {
    pub fn value(&self, t: f64, segment_start: f64) -> f64 {
        match *self {
            SourceShape::Sinusoid { amplitude, frequency, phase } => {
                amplitude * (std::f64::consts::TAU * frequency * t + phase).cos()
            }
            SourceShape::Dc { level } => level,
            SourceShape::Ramp { value, slope } => value + slope * (t - segment_start),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseSegment {
    pub start: f64,
    pub shape: SourceShape,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceWaveform {
    Sinusoid { amplitude: f64, frequency: f64, phase: f64 },
    Dc { level: f64 },
    /// Segments sorted by strictly increasing start; the value is zero before the first.
    Piecewise(Vec<PiecewiseSegment>),
}

impl SourceWaveform {
    /// Active shape at `t` and the start of the interval it belongs to.
    pub fn shape_at(&self, t: f64) -> (SourceShape, f64) {
        match self {
            SourceWaveform::Sinusoid { amplitude, frequency, phase } => (
                SourceShape::Sinusoid { amplitude: *amplitude, frequency: *frequency, phase: *phase },
                f64::NEG_INFINITY,
            ),
            SourceWaveform::Dc { level } => (SourceShape::Dc { level: *level }, f64::NEG_INFINITY),
            SourceWaveform::Piecewise(segs) => {
                let idx = segs.partition_point(|s| s.start <= t);
                if idx == 0 {
                    (SourceShape::Dc { level: 0.0 }, f64::NEG_INFINITY)
                } else {
                    (segs[idx - 1].shape, segs[idx - 1].start)
                }
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let (shape, start) = self.shape_at(t);
        shape.value(t, start)
    }

    /// Instants where the shape changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            SourceWaveform::Piecewise(segs) => segs.iter().map(|s| s.start).collect(),
            _ => Vec::new(),
        }
    }

    /// Same waveform with every amplitude and level multiplied by `k`.
    pub fn scaled(&self, k: f64) -> SourceWaveform {
        let scale = |s: SourceShape| match s {
            SourceShape::Sinusoid { amplitude, frequency, phase } => {
                SourceShape::Sinusoid { amplitude: amplitude * k, frequency, phase }
            }
            SourceShape::Dc { level } => SourceShape::Dc { level: level * k },
            SourceShape::Ramp { value, slope } => SourceShape::Ramp { value: value * k, slope: slope * k },
        };
        match self {
            SourceWaveform::Sinusoid { amplitude, frequency, phase } => {
                SourceWaveform::Sinusoid { amplitude: amplitude * k, frequency: *frequency, phase: *phase }
            }
            SourceWaveform::Dc { level } => SourceWaveform::Dc { level: level * k },
            SourceWaveform::Piecewise(segs) => SourceWaveform::Piecewise(
                segs.iter().map(|s| PiecewiseSegment { start: s.start, shape: scale(s.shape) }).collect(),
            ),
        }
    }

    fn validate(&self, id: &str) -> Result<()> {
        let check_shape = |s: &SourceShape| -> Result<()> {
            let ok = match *s {
                SourceShape::Sinusoid { amplitude, frequency, phase } => {
                    amplitude.is_finite() && frequency.is_finite() && frequency > 0.0 && phase.is_finite()
                }
                SourceShape::Dc { level } => level.is_finite(),
                SourceShape::Ramp { value, slope } => value.is_finite() && slope.is_finite(),
            };
            if ok {
                Ok(())
            } else {
                Err(Error::Validation(format!("source '{id}' has a non-finite or non-positive parameter")))
            }
        };
        match self {
            SourceWaveform::Sinusoid { amplitude, frequency, phase } => check_shape(&SourceShape::Sinusoid {
                amplitude: *amplitude,
                frequency: *frequency,
                phase: *phase,
            }),
            SourceWaveform::Dc { level } => check_shape(&SourceShape::Dc { level: *level }),
            SourceWaveform::Piecewise(segs) => {
                for w in segs.windows(2) {
                    if !(w[1].start > w[0].start) {
                        return Err(Error::Validation(format!(
                            "source '{id}' piecewise segments must have strictly increasing starts"
                        )));
                    }
                }
                for s in segs {
                    if !s.start.is_finite() {
                        return Err(Error::Validation(format!("source '{id}' segment start is not finite")));
                    }
                    check_shape(&s.shape)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub id: String,
    /// Positive then negative terminal.
    pub nodes: [String; 2],
    pub waveform: SourceWaveform,
    /// Thevenin resistance; zero makes an ideal source, which needs one grounded terminal.
    pub series_resistance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SwitchKind {
    Spst { nodes: [String; 2] },
    /// Two complementary branches from `pole`, one per throw.
    Spdt { pole: String, throws: [String; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Switch {
    pub id: String,
    pub kind: SwitchKind,
    pub r_on: f64,
    pub r_off: f64,
    /// Capacitance across an open branch; `None` leaves the open branch purely resistive.
    pub c_parallel: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SwitchPosition {
    On,
    Off,
    /// SPDT pole connected to throw 0 or 1.
    Throw(usize),
}

impl std::fmt::Display for SwitchPosition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SwitchPosition::On => write!(f, "on"),
            SwitchPosition::Off => write!(f, "off"),
            SwitchPosition::Throw(i) => write!(f, "throw{i}"),
        }
    }
}

/// Position of every switch, keyed by switch id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SwitchConfiguration(pub BTreeMap<String, SwitchPosition>);

impl SwitchConfiguration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: &str, position: SwitchPosition) -> Self {
        self.0.insert(id.to_string(), position);
        self
    }

    pub fn get(&self, id: &str) -> Option<SwitchPosition> {
        self.0.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    /// Reported voltage is `v(nodes[0]) − v(nodes[1])`.
    pub nodes: [String; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    pub ground: String,
    pub elements: Vec<Element>,
    pub sources: Vec<Source>,
    pub switches: Vec<Switch>,
    pub probes: Vec<Probe>,
}

impl Netlist {
    pub fn from_toml(text: &str) -> Result<Netlist> {
        let raw: RawNetlist = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let netlist = raw.into_netlist()?;
        netlist.validate()?;
        Ok(netlist)
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn element_mut(&mut self, id: &str) -> Option<&mut Element> {
        self.elements.iter_mut().find(|e| e.id == id)
    }

    pub fn source(&self, id: &str) -> Option<&Source> {
        self.sources.iter().find(|s| s.id == id)
    }

    pub fn source_mut(&mut self, id: &str) -> Option<&mut Source> {
        self.sources.iter_mut().find(|s| s.id == id)
    }

    pub fn switch(&self, id: &str) -> Option<&Switch> {
        self.switches.iter().find(|s| s.id == id)
    }

    pub fn switch_mut(&mut self, id: &str) -> Option<&mut Switch> {
        self.switches.iter_mut().find(|s| s.id == id)
    }

    pub fn probe(&self, name: &str) -> Option<&Probe> {
        self.probes.iter().find(|p| p.name == name)
    }

    /// All node names, ground included, in first-appearance order.
    pub fn nodes(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |n: &String| {
            if seen.insert(n.clone()) {
                out.push(n.clone());
            }
        };
        push(&self.ground);
        for e in &self.elements {
            e.nodes.iter().for_each(&mut push);
        }
        for s in &self.sources {
            s.nodes.iter().for_each(&mut push);
        }
        for sw in &self.switches {
            match &sw.kind {
                SwitchKind::Spst { nodes } => nodes.iter().for_each(&mut push),
                SwitchKind::Spdt { pole, throws } => {
                    push(pole);
                    throws.iter().for_each(&mut push);
                }
            }
        }
        out
    }

    /// Check values, identifiers, probe nodes and ground connectivity.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let all_ids = self
            .elements
            .iter()
            .map(|e| &e.id)
            .chain(self.sources.iter().map(|s| &s.id))
            .chain(self.switches.iter().map(|s| &s.id));
        for id in all_ids {
            if id.is_empty() || id.contains('.') {
                return Err(Error::Validation(format!("identifier '{id}' must be non-empty and contain no '.'")));
            }
            if !ids.insert(id.clone()) {
                return Err(Error::Validation(format!("duplicate identifier '{id}'")));
            }
        }
        for e in &self.elements {
            if !(e.value.is_finite() && e.value > 0.0) {
                return Err(Error::Validation(format!("element '{}' value must be positive", e.id)));
            }
            if e.nodes[0] == e.nodes[1] {
                return Err(Error::Validation(format!("element '{}' connects a node to itself", e.id)));
            }
        }
        for s in &self.sources {
            if !(s.series_resistance.is_finite() && s.series_resistance >= 0.0) {
                return Err(Error::Validation(format!("source '{}' series resistance must be >= 0", s.id)));
            }
            if s.nodes[0] == s.nodes[1] {
                return Err(Error::Validation(format!("source '{}' connects a node to itself", s.id)));
            }
            s.waveform.validate(&s.id)?;
        }
        for sw in &self.switches {
            let positive = |v: f64| v.is_finite() && v > 0.0;
            if !positive(sw.r_on) || !positive(sw.r_off) || sw.c_parallel.is_some_and(|c| !positive(c)) {
                return Err(Error::Validation(format!("switch '{}' values must be positive", sw.id)));
            }
            if sw.r_off <= sw.r_on {
                return Err(Error::Validation(format!("switch '{}' needs r_off > r_on", sw.id)));
            }
            let distinct = match &sw.kind {
                SwitchKind::Spst { nodes } => nodes[0] != nodes[1],
                SwitchKind::Spdt { pole, throws } => {
                    throws[0] != throws[1] && &throws[0] != pole && &throws[1] != pole
                }
            };
            if !distinct {
                return Err(Error::Validation(format!("switch '{}' terminals must be distinct", sw.id)));
            }
        }
        let nodes: BTreeSet<String> = self.nodes().into_iter().collect();
        let mut names = BTreeSet::new();
        for p in &self.probes {
            if !names.insert(p.name.clone()) {
                return Err(Error::Validation(format!("duplicate probe '{}'", p.name)));
            }
            for n in &p.nodes {
                if !nodes.contains(n) {
                    return Err(Error::Validation(format!("probe '{}' references unknown node '{n}'", p.name)));
                }
            }
        }
        self.check_connectivity()
    }

    fn check_connectivity(&self) -> Result<()> {
        let nodes = self.nodes();
        let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut uf = UnionFind::new(nodes.len());
        let mut join = |a: &str, b: &str| {
            uf.union(index[a], index[b]);
        };
        for e in &self.elements {
            join(&e.nodes[0], &e.nodes[1]);
        }
        for s in &self.sources {
            join(&s.nodes[0], &s.nodes[1]);
        }
        // r_off keeps every switch branch conducting, so connectivity is configuration independent.
        for sw in &self.switches {
            match &sw.kind {
                SwitchKind::Spst { nodes } => join(&nodes[0], &nodes[1]),
                SwitchKind::Spdt { pole, throws } => {
                    join(pole, &throws[0]);
                    join(pole, &throws[1]);
                }
            }
        }
        let g = uf.find(index[self.ground.as_str()]);
        let floating: Vec<String> =
            nodes.iter().enumerate().filter(|(i, _)| uf.find(*i) != g).map(|(_, n)| n.clone()).collect();
        if floating.is_empty() {
            Ok(())
        } else {
            Err(Error::Connectivity(floating))
        }
    }

    /// Configuration with every SPST switch at `spst` and every SPDT switch at throw 0.
    pub fn uniform_configuration(&self, spst: SwitchPosition) -> SwitchConfiguration {
        let mut cfg = SwitchConfiguration::new();
        for sw in &self.switches {
            let pos = match sw.kind {
                SwitchKind::Spst { .. } => spst,
                SwitchKind::Spdt { .. } => SwitchPosition::Throw(0),
            };
            cfg.0.insert(sw.id.clone(), pos);
        }
        cfg
    }

    /// Confirm the configuration names every switch exactly once with a valid position.
    pub fn check_configuration(&self, config: &SwitchConfiguration) -> Result<()> {
        if config.0.len() != self.switches.len() {
            return Err(Error::Validation(format!(
                "configuration covers {} switches, netlist has {}",
                config.0.len(),
                self.switches.len()
            )));
        }
        for sw in &self.switches {
            let pos = config
                .get(&sw.id)
                .ok_or_else(|| Error::Validation(format!("configuration lacks switch '{}'", sw.id)))?;
            let ok = match (&sw.kind, pos) {
                (SwitchKind::Spst { .. }, SwitchPosition::On | SwitchPosition::Off) => true,
                (SwitchKind::Spdt { .. }, SwitchPosition::Throw(i)) => i < 2,
                _ => false,
            };
            if !ok {
                return Err(Error::Validation(format!("position {pos} is invalid for switch '{}'", sw.id)));
            }
        }
        Ok(())
    }

    /// Two-terminal elements realizing the netlist in one configuration.
    ///
    /// A closed branch becomes `<switch>.ron`; an open one becomes `<switch>.roff`
    /// in parallel with `<switch>.csw`. SPDT branches carry a `.t<throw>` infix.
    pub fn effective_elements(&self, config: &SwitchConfiguration) -> Result<Vec<Element>> {
        self.check_configuration(config)?;
        let mut out = self.elements.clone();
        for sw in &self.switches {
            let pos = config.get(&sw.id).expect("checked above");
            let mut branch = |prefix: String, a: &String, b: &String, closed: bool| {
                let nodes = [a.clone(), b.clone()];
                if closed {
                    out.push(Element { id: format!("{prefix}.ron"), kind: ElementKind::Resistor, value: sw.r_on, nodes });
                } else {
                    out.push(Element {
                        id: format!("{prefix}.roff"),
                        kind: ElementKind::Resistor,
                        value: sw.r_off,
                        nodes: nodes.clone(),
                    });
                    if let Some(c) = sw.c_parallel {
                        out.push(Element { id: format!("{prefix}.csw"), kind: ElementKind::Capacitor, value: c, nodes });
                    }
                }
            };
            match &sw.kind {
                SwitchKind::Spst { nodes } => {
                    branch(sw.id.clone(), &nodes[0], &nodes[1], pos == SwitchPosition::On)
                }
                SwitchKind::Spdt { pole, throws } => {
                    for (i, t) in throws.iter().enumerate() {
                        branch(format!("{}.t{i}", sw.id), pole, t, pos == SwitchPosition::Throw(i));
                    }
                }
            }
        }
        Ok(out)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetlist {
    ground: String,
    #[serde(default)]
    nodes: Option<Vec<String>>,
    #[serde(default)]
    elements: Vec<RawElement>,
    #[serde(default)]
    sources: Vec<RawSource>,
    #[serde(default)]
    switches: Vec<RawSwitch>,
    #[serde(default)]
    probes: Vec<RawProbe>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    id: String,
    kind: String,
    value: String,
    nodes: [String; 2],
}

struct RawShape {
    kind: String,
    amplitude: Option<String>,
    frequency: Option<String>,
    phase: Option<String>,
    level: Option<String>,
    value: Option<String>,
    slope: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    start: String,
    kind: String,
    amplitude: Option<String>,
    frequency: Option<String>,
    phase: Option<String>,
    level: Option<String>,
    value: Option<String>,
    slope: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    id: String,
    nodes: [String; 2],
    #[serde(default)]
    series_resistance: Option<String>,
    kind: String,
    amplitude: Option<String>,
    frequency: Option<String>,
    phase: Option<String>,
    level: Option<String>,
    value: Option<String>,
    slope: Option<String>,
    #[serde(default)]
    segments: Option<Vec<RawSegment>>,
}

macro_rules! shape_of {
    ($raw:expr) => {
        RawShape {
            kind: $raw.kind,
            amplitude: $raw.amplitude,
            frequency: $raw.frequency,
            phase: $raw.phase,
            level: $raw.level,
            value: $raw.value,
            slope: $raw.slope,
        }
    };
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSwitch {
    id: String,
    kind: String,
    #[serde(default)]
    nodes: Option<[String; 2]>,
    #[serde(default)]
    pole: Option<String>,
    #[serde(default)]
    throws: Option<[String; 2]>,
    r_on: String,
    r_off: String,
    #[serde(default)]
    c_parallel: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    name: String,
    #[serde(default)]
    nodes: Option<[String; 2]>,
    #[serde(default)]
    element: Option<String>,
}

fn required<'a>(field: &'a Option<String>, name: &str, owner: &str) -> Result<&'a str> {
    field.as_deref().ok_or_else(|| Error::Parse(format!("'{owner}' is missing '{name}'")))
}

impl RawShape {
    fn into_shape(self, owner: &str) -> Result<SourceShape> {
        let unused = |fields: &[(&str, &Option<String>)]| -> Result<()> {
            for (name, f) in fields {
                if f.is_some() {
                    return Err(Error::Parse(format!("'{owner}' of kind '{}' does not accept '{name}'", self.kind)));
                }
            }
            Ok(())
        };
        match self.kind.as_str() {
            "sinusoid" => {
                unused(&[("level", &self.level), ("value", &self.value), ("slope", &self.slope)])?;
                Ok(SourceShape::Sinusoid {
                    amplitude: parse_quantity(required(&self.amplitude, "amplitude", owner)?, Unit::Volt)?,
                    frequency: parse_quantity(required(&self.frequency, "frequency", owner)?, Unit::Hertz)?,
                    phase: match &self.phase {
                        Some(p) => parse_quantity(p, Unit::Radian)?,
                        None => 0.0,
                    },
                })
            }
            "dc" => {
                unused(&[
                    ("amplitude", &self.amplitude),
                    ("frequency", &self.frequency),
                    ("phase", &self.phase),
                    ("value", &self.value),
                    ("slope", &self.slope),
                ])?;
                Ok(SourceShape::Dc { level: parse_quantity(required(&self.level, "level", owner)?, Unit::Volt)? })
            }
            "ramp" => {
                unused(&[
                    ("amplitude", &self.amplitude),
                    ("frequency", &self.frequency),
                    ("phase", &self.phase),
                    ("level", &self.level),
                ])?;
                Ok(SourceShape::Ramp {
                    value: parse_quantity(required(&self.value, "value", owner)?, Unit::Volt)?,
                    slope: parse_quantity(required(&self.slope, "slope", owner)?, Unit::Dimensionless)?,
                })
            }
            other => Err(Error::Parse(format!("'{owner}' has unknown shape kind '{other}'"))),
        }
    }

    fn is_empty(&self) -> bool {
        [&self.amplitude, &self.frequency, &self.phase, &self.level, &self.value, &self.slope]
            .iter()
            .all(|f| f.is_none())
    }
}

impl RawNetlist {
    fn into_netlist(self) -> Result<Netlist> {
        let declared: Option<BTreeSet<String>> = self.nodes.map(|v| v.into_iter().collect());
        let check_node = |n: &String, owner: &str| -> Result<()> {
            match &declared {
                Some(set) if !set.contains(n) && n != &self.ground => {
                    Err(Error::Validation(format!("'{owner}' references undeclared node '{n}'")))
                }
                _ => Ok(()),
            }
        };
        let mut elements = Vec::new();
        for e in self.elements {
            let (kind, unit) = match e.kind.as_str() {
                "resistor" => (ElementKind::Resistor, Unit::Ohm),
                "capacitor" => (ElementKind::Capacitor, Unit::Farad),
                "inductor" => (ElementKind::Inductor, Unit::Henry),
                other => return Err(Error::Parse(format!("element '{}' has unknown kind '{other}'", e.id))),
            };
            for n in &e.nodes {
                check_node(n, &e.id)?;
            }
            elements.push(Element { value: parse_quantity(&e.value, unit)?, id: e.id, kind, nodes: e.nodes });
        }
        let mut sources = Vec::new();
        for s in self.sources {
            for n in &s.nodes {
                check_node(n, &s.id)?;
            }
            let id = s.id;
            let nodes = s.nodes;
            let series = s.series_resistance;
            let segments = s.segments;
            let shape = shape_of!(s);
            let waveform = if shape.kind == "piecewise" {
                if !shape.is_empty() {
                    return Err(Error::Parse(format!("piecewise source '{id}' takes only 'segments'")));
                }
                let segs =
                    segments.ok_or_else(|| Error::Parse(format!("piecewise source '{id}' needs 'segments'")))?;
                let mut out = Vec::new();
                for seg in segs {
                    let start = parse_quantity(&seg.start, Unit::Second)?;
                    out.push(PiecewiseSegment { start, shape: shape_of!(seg).into_shape(&id)? });
                }
                SourceWaveform::Piecewise(out)
            } else {
                if segments.is_some() {
                    return Err(Error::Parse(format!("source '{id}' only takes 'segments' when piecewise")));
                }
                match shape.into_shape(&id)? {
                    SourceShape::Sinusoid { amplitude, frequency, phase } => {
                        SourceWaveform::Sinusoid { amplitude, frequency, phase }
                    }
                    SourceShape::Dc { level } => SourceWaveform::Dc { level },
                    SourceShape::Ramp { .. } => {
                        return Err(Error::Parse(format!("ramp shape for '{id}' is only valid inside segments")))
                    }
                }
            };
            let series_resistance = match &series {
                Some(r) => parse_quantity(r, Unit::Ohm)?,
                None => 0.0,
            };
            sources.push(Source { id, nodes, waveform, series_resistance });
        }
        let mut switches = Vec::new();
        for sw in self.switches {
            let kind = match sw.kind.as_str() {
                "spst" => {
                    if sw.pole.is_some() || sw.throws.is_some() {
                        return Err(Error::Parse(format!("spst switch '{}' takes 'nodes' only", sw.id)));
                    }
                    let nodes = sw.nodes.ok_or_else(|| Error::Parse(format!("switch '{}' needs 'nodes'", sw.id)))?;
                    SwitchKind::Spst { nodes }
                }
                "spdt" => {
                    if sw.nodes.is_some() {
                        return Err(Error::Parse(format!("spdt switch '{}' takes 'pole' and 'throws'", sw.id)));
                    }
                    let pole = sw.pole.ok_or_else(|| Error::Parse(format!("switch '{}' needs 'pole'", sw.id)))?;
                    let throws =
                        sw.throws.ok_or_else(|| Error::Parse(format!("switch '{}' needs 'throws'", sw.id)))?;
                    SwitchKind::Spdt { pole, throws }
                }
                other => return Err(Error::Parse(format!("switch '{}' has unknown kind '{other}'", sw.id))),
            };
            match &kind {
                SwitchKind::Spst { nodes } => nodes.iter().try_for_each(|n| check_node(n, &sw.id))?,
                SwitchKind::Spdt { pole, throws } => {
                    check_node(pole, &sw.id)?;
                    throws.iter().try_for_each(|n| check_node(n, &sw.id))?;
                }
            }
            switches.push(Switch {
                r_on: parse_quantity(&sw.r_on, Unit::Ohm)?,
                r_off: parse_quantity(&sw.r_off, Unit::Ohm)?,
                c_parallel: sw.c_parallel.as_deref().map(|c| parse_quantity(c, Unit::Farad)).transpose()?,
                id: sw.id,
                kind,
            });
        }
        let mut probes = Vec::new();
        for p in self.probes {
            let nodes = match (p.nodes, p.element) {
                (Some(nodes), None) => nodes,
                (None, Some(id)) => elements
                    .iter()
                    .find(|e| e.id == id)
                    .map(|e| e.nodes.clone())
                    .ok_or_else(|| Error::Validation(format!("probe '{}' names unknown element '{id}'", p.name)))?,
                _ => return Err(Error::Parse(format!("probe '{}' needs exactly one of 'nodes' or 'element'", p.name))),
            };
            probes.push(Probe { name: p.name, nodes });
        }
        Ok(Netlist { ground: self.ground, elements, sources, switches, probes })
    }
}
