//! Laplace-domain OFF-state analysis.
//!
//! The unforced network seen from a terminal pair is reduced by series and
//! parallel merges into branches, each a chain of blocks between the terminal
//! and its reference. Charged capacitors become step sources in series with
//! their block. Node voltages are rational functions over the common
//! denominator `s·D(s)`, expanded into decaying real and oscillatory terms.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;

use crate::circuit::CircuitState;
use crate::error::{Error, Result};
use crate::netlist::{ElementKind, Netlist, SwitchConfiguration};
use crate::poly::{product, Poly};

/// `num(s)/den(s)` with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransfer {
    pub num: Poly,
    pub den: Poly,
}

impl RationalTransfer {
    pub fn new(num: Poly, den: Poly) -> Result<RationalTransfer> {
        match den.degree() {
            Some(d) if d >= 1 => {}
            _ => return Err(Error::Validation("denominator degree must be at least 1".into())),
        }
        Ok(RationalTransfer { num, den })
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.num.eval(s) / self.den.eval(s)
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.degree().is_none_or(|n| n < self.den.degree().unwrap_or(0))
    }

    /// Cancel common factors of `s`.
    fn cancel_origin(mut self) -> RationalTransfer {
        if self.num.is_zero() {
            let k = self.den.low_zeros();
            self.den = self.den.shift_down(k);
            return self;
        }
        let k = self.num.low_zeros().min(self.den.low_zeros());
        RationalTransfer { num: self.num.shift_down(k), den: self.den.shift_down(k) }
    }
}

/// One charged capacitor acting as a step source `v(0)/s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSource {
    pub element: String,
    pub initial_voltage: f64,
    /// Impedance of the branch holding the source, seen from the terminal.
    pub impedance: RationalTransfer,
}

#[derive(Debug, Clone)]
struct Block {
    lower: String,
    /// Impedance `p/q`.
    p: Poly,
    q: Poly,
    /// Step amplitude of the voltage drop from the upper to the lower node.
    eps: f64,
}

#[derive(Debug, Clone)]
struct Branch {
    blocks: Vec<Block>,
    sources: Vec<(String, f64)>,
}

impl Branch {
    /// Denominator `Π q_k`.
    fn d(&self) -> Poly {
        product(self.blocks.iter().map(|b| &b.q))
    }

    /// `z_k · Π q` for blocks `0..=j`, summed.
    fn partial_numerator(&self, j: usize) -> Poly {
        let mut acc = Poly::zero();
        for k in 0..=j {
            let others = product(self.blocks.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, b)| &b.q));
            acc = &acc + &(&self.blocks[k].p * &others);
        }
        acc
    }

    fn n(&self) -> Poly {
        self.partial_numerator(self.blocks.len() - 1)
    }

    fn eps(&self) -> f64 {
        self.blocks.iter().map(|b| b.eps).sum()
    }
}

/// Laplace-domain equivalent of an unforced network with charged capacitors.
#[derive(Debug, Clone)]
pub struct OffStateNetwork {
    pub terminal: [String; 2],
    pub sources: Vec<StepSource>,
    /// Total impedance from the terminal to its reference.
    pub z_a: RationalTransfer,
    /// Inductor currents present in the initial state but not modeled.
    pub ignored_inductor_currents: Vec<(String, f64)>,
    /// Voltage numerators over `s·D` for every chain node, relative to the reference.
    node_numerators: BTreeMap<String, Poly>,
    d: Poly,
    probes: BTreeMap<String, [String; 2]>,
}

#[derive(Debug, Clone)]
struct Edge {
    ends: [String; 2],
    p: Poly,
    q: Poly,
    eps: f64,
    charged: Vec<(String, f64)>,
}

impl Edge {
    fn flipped(mut self) -> Edge {
        self.ends.swap(0, 1);
        self.eps = -self.eps;
        self
    }
}

/// Strip shared factors of `s` from an impedance `p/q`.
fn reduce(p: Poly, q: Poly) -> (Poly, Poly) {
    let k = p.low_zeros().min(q.low_zeros());
    (p.shift_down(k), q.shift_down(k))
}

/// Build the step-source network of `netlist` in configuration `config`
/// from the charged capacitors in `initial`, seen from the `v_a` probe.
pub fn off_state_network(netlist: &Netlist, config: &SwitchConfiguration, initial: &CircuitState) -> Result<OffStateNetwork> {
    let probe = netlist
        .probe("v_a")
        .ok_or_else(|| Error::Validation("netlist has no 'v_a' probe".into()))?;
    off_state_network_at(netlist, config, initial, [probe.nodes[0].clone(), probe.nodes[1].clone()])
}

/// As [`off_state_network`] with an explicit terminal node pair.
pub fn off_state_network_at(
    netlist: &Netlist,
    config: &SwitchConfiguration,
    initial: &CircuitState,
    terminal: [String; 2],
) -> Result<OffStateNetwork> {
    netlist.validate()?;
    let elements = netlist.effective_elements(config)?;

    // Ideal sources short their terminals once zeroed.
    let mut alias: BTreeMap<String, String> = BTreeMap::new();
    for s in netlist.sources.iter().filter(|s| s.series_resistance == 0.0) {
        alias.insert(s.nodes[0].clone(), s.nodes[1].clone());
    }
    let resolve = |n: &str| -> String {
        let mut cur = n.to_string();
        let mut guard = 0;
        while let Some(next) = alias.get(&cur) {
            cur = next.clone();
            guard += 1;
            if guard > alias.len() {
                break;
            }
        }
        cur
    };
    let terminal = [resolve(&terminal[0]), resolve(&terminal[1])];
    if terminal[0] == terminal[1] {
        return Err(Error::Topology { reason: "terminal shorted by an ideal source".into(), elements: Vec::new() });
    }

    let mut ignored = Vec::new();
    for (id, v) in &initial.values {
        match elements.iter().find(|e| &e.id == id) {
            None => return Err(Error::Consistency(format!("charged element '{id}' is absent from the network"))),
            Some(e) if e.kind == ElementKind::Inductor && *v != 0.0 => ignored.push((id.clone(), *v)),
            Some(e) if e.kind == ElementKind::Resistor => {
                return Err(Error::Consistency(format!("'{id}' is a resistor and holds no state")))
            }
            _ => {}
        }
    }

    let mut edges: Vec<Edge> = Vec::new();
    for e in &elements {
        let ends = [resolve(&e.nodes[0]), resolve(&e.nodes[1])];
        let (p, q) = match e.kind {
            ElementKind::Resistor => (Poly::constant(e.value), Poly::constant(1.0)),
            ElementKind::Inductor => (Poly::monomial(e.value, 1), Poly::constant(1.0)),
            ElementKind::Capacitor => (Poly::constant(1.0), Poly::monomial(e.value, 1)),
        };
        let v0 = if e.kind == ElementKind::Capacitor { initial.values.get(&e.id).copied().unwrap_or(0.0) } else { 0.0 };
        let charged = if v0 != 0.0 { vec![(e.id.clone(), v0)] } else { Vec::new() };
        edges.push(Edge { ends, p, q, eps: v0, charged });
    }
    for s in netlist.sources.iter().filter(|s| s.series_resistance > 0.0) {
        edges.push(Edge {
            ends: [resolve(&s.nodes[0]), resolve(&s.nodes[1])],
            p: Poly::constant(s.series_resistance),
            q: Poly::constant(1.0),
            eps: 0.0,
            charged: Vec::new(),
        });
    }
    edges.retain(|e| e.ends[0] != e.ends[1]);

    let mut protected: BTreeSet<String> = terminal.iter().cloned().collect();
    let mut probes = BTreeMap::new();
    for p in &netlist.probes {
        let nodes = [resolve(&p.nodes[0]), resolve(&p.nodes[1])];
        protected.extend(nodes.iter().cloned());
        probes.insert(p.name.clone(), nodes);
    }
    let spans_terminal = |e: &Edge| {
        (e.ends[0] == terminal[0] && e.ends[1] == terminal[1]) || (e.ends[0] == terminal[1] && e.ends[1] == terminal[0])
    };

    loop {
        let mut changed = false;
        // Parallel merges of uncharged edges.
        'par: for i in 0..edges.len() {
            if !edges[i].charged.is_empty() || spans_terminal(&edges[i]) {
                continue;
            }
            for j in i + 1..edges.len() {
                let same = edges[j].ends == edges[i].ends || (edges[j].ends[0] == edges[i].ends[1] && edges[j].ends[1] == edges[i].ends[0]);
                if !same || !edges[j].charged.is_empty() {
                    continue;
                }
                let b = edges.remove(j);
                let a = &mut edges[i];
                let den = &(&a.p * &b.q) + &(&b.p * &a.q);
                let (p, q) = reduce(&a.p * &b.p, den);
                a.p = p;
                a.q = q;
                changed = true;
                break 'par;
            }
        }
        if changed {
            continue;
        }
        // Series merges and dangling edges through unprotected nodes.
        let nodes: BTreeSet<String> = edges.iter().flat_map(|e| e.ends.iter().cloned()).collect();
        for m in nodes.iter().filter(|n| !protected.contains(*n)) {
            let inc: Vec<usize> = (0..edges.len()).filter(|&k| edges[k].ends.contains(m)).collect();
            if inc.len() == 1 {
                edges.remove(inc[0]);
                changed = true;
                break;
            }
            if inc.len() == 2 {
                let e2 = edges.remove(inc[1]);
                let e1 = edges.remove(inc[0]);
                let e1 = if e1.ends[1] == *m { e1 } else { e1.flipped() };
                let e2 = if e2.ends[0] == *m { e2 } else { e2.flipped() };
                let (p, q) = reduce(&(&e1.p * &e2.q) + &(&e2.p * &e1.q), &e1.q * &e2.q);
                let mut charged = e1.charged;
                charged.extend(e2.charged);
                let merged = Edge { ends: [e1.ends[0].clone(), e2.ends[1].clone()], p, q, eps: e1.eps + e2.eps, charged };
                if merged.ends[0] != merged.ends[1] {
                    edges.push(merged);
                }
                changed = true;
                break;
            }
        }
        if !changed {
            break;
        }
    }

    // Walk each branch from the terminal to its reference.
    let mut used = vec![false; edges.len()];
    let mut branches = Vec::new();
    for start in 0..edges.len() {
        if used[start] || !edges[start].ends.contains(&terminal[0]) {
            continue;
        }
        let mut blocks = Vec::new();
        let mut sources = Vec::new();
        let mut cur = terminal[0].clone();
        let mut k = start;
        loop {
            used[k] = true;
            let e = if edges[k].ends[0] == cur { edges[k].clone() } else { edges[k].clone().flipped() };
            sources.extend(e.charged.iter().cloned());
            cur = e.ends[1].clone();
            blocks.push(Block { lower: cur.clone(), p: e.p, q: e.q, eps: e.eps });
            if cur == terminal[1] {
                break;
            }
            let next: Vec<usize> = (0..edges.len()).filter(|&j| j != k && edges[j].ends.contains(&cur)).collect();
            if next.len() != 1 || used[next[0]] || cur == terminal[0] {
                return Err(Error::NotApplicable(format!("network is not series-parallel from the terminal (at node '{cur}')")));
            }
            k = next[0];
        }
        branches.push(Branch { blocks, sources });
    }
    if let Some(k) = used.iter().position(|u| !u) {
        return Err(Error::NotApplicable(format!(
            "element group between '{}' and '{}' is not on a terminal branch",
            edges[k].ends[0], edges[k].ends[1]
        )));
    }
    if branches.is_empty() {
        return Err(Error::Topology { reason: "terminal is floating".into(), elements: Vec::new() });
    }

    let ns: Vec<Poly> = branches.iter().map(|b| b.n()).collect();
    let ds: Vec<Poly> = branches.iter().map(|b| b.d()).collect();
    let eps: Vec<f64> = branches.iter().map(|b| b.eps()).collect();
    let others = |skip: &[usize]| product(ns.iter().enumerate().filter(|(j, _)| !skip.contains(j)).map(|(_, n)| n));
    let nb = branches.len();
    let mut d = Poly::zero();
    let mut n_a = Poly::zero();
    for i in 0..nb {
        let t = &ds[i] * &others(&[i]);
        n_a = &n_a + &t.scale(eps[i]);
        d = &d + &t;
    }

    let mut node_numerators: BTreeMap<String, Poly> = BTreeMap::new();
    node_numerators.insert(terminal[1].clone(), Poly::zero());
    node_numerators.insert(terminal[0].clone(), n_a.clone());
    for (i, br) in branches.iter().enumerate() {
        // I_i = d_i·M_i/(s·D).
        let mut m_i = Poly::zero();
        for j in (0..nb).filter(|&j| j != i) {
            m_i = &m_i + &(&ds[j] * &others(&[i, j])).scale(eps[j] - eps[i]);
        }
        let mut eps_above = 0.0;
        for (j, blk) in br.blocks.iter().enumerate() {
            eps_above += blk.eps;
            if blk.lower == terminal[1] {
                continue;
            }
            let v = &(&n_a - &(&br.partial_numerator(j) * &m_i)) - &d.scale(eps_above);
            node_numerators.insert(blk.lower.clone(), v);
        }
    }

    let mut sources = Vec::new();
    for (i, br) in branches.iter().enumerate() {
        for (element, v0) in &br.sources {
            let (p, q) = reduce(ns[i].clone(), ds[i].clone());
            sources.push(StepSource {
                element: element.clone(),
                initial_voltage: *v0,
                impedance: RationalTransfer { num: p, den: q },
            });
        }
    }
    sources.sort_by(|a, b| a.element.cmp(&b.element));
    let z_a = RationalTransfer::new(others(&[]), d.clone())?.cancel_origin();

    Ok(OffStateNetwork { terminal, sources, z_a, ignored_inductor_currents: ignored, node_numerators, d, probes })
}

impl OffStateNetwork {
    /// Laplace transform of the voltage `v(p) − v(n)`.
    pub fn node_response(&self, p: &str, n: &str) -> Result<RationalTransfer> {
        let get = |node: &str| {
            self.node_numerators
                .get(node)
                .ok_or_else(|| Error::NotApplicable(format!("node '{node}' is internal to a reduced block")))
        };
        let num = get(p)? - get(n)?;
        let den = &self.d * &Poly::monomial(1.0, 1);
        Ok(RationalTransfer::new(num, den)?.cancel_origin())
    }

    /// Laplace transform of a named probe voltage.
    pub fn response(&self, probe: &str) -> Result<RationalTransfer> {
        let nodes = self
            .probes
            .get(probe)
            .ok_or_else(|| Error::Validation(format!("unknown probe '{probe}'")))?;
        self.node_response(&nodes[0], &nodes[1])
    }

    /// Characteristic polynomial of the unforced network.
    pub fn characteristic(&self) -> &Poly {
        &self.d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleResidue {
    /// Real poles first (slowest first), then conjugate pairs with the upper pole first.
    pub poles: Vec<Complex64>,
    pub residues: Vec<Complex64>,
}

impl PoleResidue {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.poles.iter().zip(&self.residues).map(|(p, r)| r / (s - p)).sum()
    }
}

/// Partial-fraction expansion of a strictly proper transfer with simple poles.
pub fn pole_residue(transfer: &RationalTransfer) -> Result<PoleResidue> {
    if !transfer.is_strictly_proper() {
        return Err(Error::Validation("transfer is not strictly proper".into()));
    }
    let roots = transfer.den.roots()?;
    let scale = roots.iter().map(|r| r.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[i + 1..] {
            let tol = 1e-7 * a.norm().max(b.norm()).max(1e-12 * scale);
            if (a - b).norm() <= tol {
                return Err(Error::UnsupportedMultiplicity(format!("{a}")));
            }
        }
    }
    let mut real = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for r in roots {
        if r.im.abs() <= 1e-10 * r.norm() {
            real.push(Complex64::new(r.re, 0.0));
        } else if r.im > 0.0 {
            upper.push(r);
        } else {
            lower.push(r);
        }
    }
    if upper.len() != lower.len() {
        return Err(Error::Symmetry(format!("{} upper vs {} lower poles", upper.len(), lower.len())));
    }
    real.sort_by(|a, b| b.re.partial_cmp(&a.re).expect("finite"));
    upper.sort_by(|a, b| b.re.partial_cmp(&a.re).expect("finite"));
    let dden = transfer.den.derivative();
    let residue = |p: Complex64| transfer.num.eval(p) / dden.eval(p);
    let mut poles = Vec::new();
    let mut residues = Vec::new();
    for p in real {
        let r = residue(p);
        poles.push(p);
        residues.push(Complex64::new(r.re, 0.0));
    }
    for p in upper {
        let partner = lower
            .iter()
            .map(|q| (q - p.conj()).norm())
            .fold(f64::INFINITY, f64::min);
        if partner > 1e-6 * p.norm() {
            return Err(Error::Symmetry(format!("pole {p} has no conjugate")));
        }
        let r = residue(p);
        poles.push(p);
        residues.push(r);
        poles.push(p.conj());
        residues.push(r.conj());
    }
    Ok(PoleResidue { poles, residues })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealTerm {
    pub amplitude: f64,
    pub alpha: f64,
}

/// `e^{−αt}(cos_amp·cos ωt − sin_amp·sin ωt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub cos_amp: f64,
    pub sin_amp: f64,
    pub omega: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransientExpansion {
    /// Sorted by increasing decay.
    pub real_terms: Vec<RealTerm>,
    /// Sorted by increasing decay.
    pub pairs: Vec<PairTerm>,
}

/// Real-valued time function of a conjugate-closed pole-residue set.
pub fn expansion(pr: &PoleResidue) -> Result<TransientExpansion> {
    if pr.poles.len() != pr.residues.len() {
        return Err(Error::Validation("pole and residue counts differ".into()));
    }
    let mut out = TransientExpansion::default();
    let mut taken = vec![false; pr.poles.len()];
    for i in 0..pr.poles.len() {
        if taken[i] {
            continue;
        }
        let (p, r) = (pr.poles[i], pr.residues[i]);
        let tol = 1e-9 * p.norm().max(1.0);
        if p.re > tol {
            return Err(Error::NotApplicable(format!("unstable pole {p}")));
        }
        if p.im.abs() <= tol {
            if r.im.abs() > 1e-9 * r.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::Symmetry(format!("real pole {p} has complex residue {r}")));
            }
            taken[i] = true;
            out.real_terms.push(RealTerm { amplitude: r.re, alpha: -p.re });
            continue;
        }
        let partner = (0..pr.poles.len()).find(|&j| {
            !taken[j] && j != i && (pr.poles[j] - p.conj()).norm() <= 1e-9 * p.norm()
        });
        let j = partner.ok_or_else(|| Error::Symmetry(format!("pole {p} has no conjugate")))?;
        if (pr.residues[j] - r.conj()).norm() > 1e-9 * r.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Symmetry(format!("residues at {p} are not conjugate")));
        }
        taken[i] = true;
        taken[j] = true;
        let (p, r) = if p.im > 0.0 { (p, r) } else { (p.conj(), r.conj()) };
        // r e^{pt} + conj = 2e^{−αt}(Re r cos ωt − Im r sin ωt).
        out.pairs.push(PairTerm { cos_amp: 2.0 * r.re, sin_amp: 2.0 * r.im, omega: p.im, alpha: -p.re });
    }
    out.real_terms.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).expect("finite"));
    out.pairs.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).expect("finite"));
    Ok(out)
}

impl TransientExpansion {
    pub fn eval(&self, t: f64) -> f64 {
        let real: f64 = self.real_terms.iter().map(|r| r.amplitude * (-r.alpha * t).exp()).sum();
        let osc: f64 = self
            .pairs
            .iter()
            .map(|p| (-p.alpha * t).exp() * (p.cos_amp * (p.omega * t).cos() - p.sin_amp * (p.omega * t).sin()))
            .sum();
        real + osc
    }

    pub fn initial_value(&self) -> f64 {
        self.real_terms.iter().map(|r| r.amplitude).sum::<f64>() + self.pairs.iter().map(|p| p.cos_amp).sum::<f64>()
    }

    /// Every amplitude divided by `v`.
    pub fn normalized(&self, v: f64) -> TransientExpansion {
        TransientExpansion {
            real_terms: self.real_terms.iter().map(|r| RealTerm { amplitude: r.amplitude / v, ..*r }).collect(),
            pairs: self.pairs.iter().map(|p| PairTerm { cos_amp: p.cos_amp / v, sin_amp: p.sin_amp / v, ..*p }).collect(),
        }
    }

    /// Termwise difference of two expansions over the same poles.
    pub fn termwise_sub(&self, other: &TransientExpansion) -> Result<TransientExpansion> {
        if self.real_terms.len() != other.real_terms.len() || self.pairs.len() != other.pairs.len() {
            return Err(Error::Consistency("expansions have different pole sets".into()));
        }
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let mut out = TransientExpansion::default();
        for (a, b) in self.real_terms.iter().zip(&other.real_terms) {
            if !same(a.alpha, b.alpha) {
                return Err(Error::Consistency("real poles differ".into()));
            }
            out.real_terms.push(RealTerm { amplitude: a.amplitude - b.amplitude, alpha: a.alpha });
        }
        for (a, b) in self.pairs.iter().zip(&other.pairs) {
            if !same(a.alpha, b.alpha) || !same(a.omega, b.omega) {
                return Err(Error::Consistency("complex poles differ".into()));
            }
            out.pairs.push(PairTerm {
                cos_amp: a.cos_amp - b.cos_amp,
                sin_amp: a.sin_amp - b.sin_amp,
                omega: a.omega,
                alpha: a.alpha,
            });
        }
        Ok(out)
    }

    /// CSV rows `term_kind,amp_cos_V,amp_sin_V,alpha_per_s,omega_rad_per_s`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "term_kind,amp_cos_V,amp_sin_V,alpha_per_s,omega_rad_per_s")?;
        for r in &self.real_terms {
            writeln!(out, "real,{},0,{},0", r.amplitude, r.alpha)?;
        }
        for p in &self.pairs {
            writeln!(out, "pair,{},{},{},{}", p.cos_amp, p.sin_amp, p.alpha, p.omega)?;
        }
        Ok(())
    }
}

/// Transient expansion of probe `probe` of an OFF-state network.
pub fn probe_expansion(network: &OffStateNetwork, probe: &str) -> Result<TransientExpansion> {
    let tf = network.response(probe)?;
    if tf.num.is_zero() {
        return Ok(TransientExpansion::default());
    }
    expansion(&pole_residue(&tf)?)
}

/// Coefficients in the two-pair layout of the reference table.
///
/// `v_a = A₀e^{−α₀t} − A₁e^{−α₁t}sin ω₁t + B₁e^{−α₁t}cos ω₁t + A₂e^{−α₂t}sin ω₂t + B₂e^{−α₂t}cos ω₂t`
/// and `v_rad = C₁e^{−α₁t}sin ω₁t − D₁e^{−α₁t}cos ω₁t − C₂e^{−α₂t}sin ω₂t − D₂e^{−α₂t}cos ω₂t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientTable {
    pub a0: f64,
    pub alpha0: f64,
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub omega1: f64,
    pub alpha1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub d2: f64,
    pub omega2: f64,
    pub alpha2: f64,
}

impl CoefficientTable {
    pub fn from_expansions(va: &TransientExpansion, vrad: &TransientExpansion) -> Result<CoefficientTable> {
        if va.real_terms.is_empty() || va.pairs.len() < 2 || vrad.pairs.len() < 2 {
            return Err(Error::NotApplicable("expected one real term and two oscillatory pairs".into()));
        }
        let (r0, p1, p2) = (va.real_terms[0], va.pairs[0], va.pairs[1]);
        let (q1, q2) = (vrad.pairs[0], vrad.pairs[1]);
        Ok(CoefficientTable {
            a0: r0.amplitude,
            alpha0: r0.alpha,
            a1: p1.sin_amp,
            b1: p1.cos_amp,
            c1: -q1.sin_amp,
            d1: -q1.cos_amp,
            omega1: p1.omega,
            alpha1: p1.alpha,
            a2: -p2.sin_amp,
            b2: p2.cos_amp,
            c2: q2.sin_amp,
            d2: -q2.cos_amp,
            omega2: p2.omega,
            alpha2: p2.alpha,
        })
    }

    /// Amplitudes `[A₀, A₁, A₂, B₁, B₂, C₁, C₂, D₁, D₂]`.
    pub fn amplitudes(&self) -> [f64; 9] {
        [self.a0, self.a1, self.a2, self.b1, self.b2, self.c1, self.c2, self.d1, self.d2]
    }
}

/// Dominant-term summary of an OFF-state response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantApprox {
    pub v_ss: f64,
    pub v_osc: f64,
    pub v_osc_prime: f64,
    pub omega1: f64,
    pub alpha1: f64,
    /// Largest discarded amplitude, weighted by `α₁/α_n`, relative to the kept amplitude.
    pub worst_discarded_ratio: f64,
    pub dominant: bool,
}

/// Weighted discarded amplitudes may reach this fraction of the kept one.
pub const DOMINANCE_THRESHOLD: f64 = 0.25;

impl DominantApprox {
    /// `(V_ss − V_osc) + V_osc e^{−α₁t} cos ω₁t`.
    pub fn va(&self, t: f64) -> f64 {
        (self.v_ss - self.v_osc) + self.v_osc * (-self.alpha1 * t).exp() * (self.omega1 * t).cos()
    }

    /// `−V_osc′ e^{−α₁t} cos ω₁t`.
    pub fn vrad(&self, t: f64) -> f64 {
        -self.v_osc_prime * (-self.alpha1 * t).exp() * (self.omega1 * t).cos()
    }

    /// Oscillation frequency in hertz.
    pub fn ring_frequency(&self) -> f64 {
        self.omega1 / TAU
    }
}

fn discarded_ratio(e: &TransientExpansion, alpha1: f64, kept: f64) -> f64 {
    let weight = |alpha: f64| if alpha > 0.0 { (alpha1 / alpha).min(1.0) } else { 1.0 };
    let mut worst: f64 = e.pairs[0].sin_amp.abs();
    for p in &e.pairs[1..] {
        worst = worst.max(p.cos_amp.abs().max(p.sin_amp.abs()) * weight(p.alpha));
    }
    for r in e.real_terms.iter().skip(1) {
        worst = worst.max(r.amplitude.abs() * weight(r.alpha));
    }
    worst / kept.abs()
}

pub fn dominant_approx(va: &TransientExpansion, vrad: &TransientExpansion) -> Result<DominantApprox> {
    let p1 = *va.pairs.first().ok_or_else(|| Error::NotApplicable("v_a expansion has no oscillatory pair".into()))?;
    let q1 = *vrad.pairs.first().ok_or_else(|| Error::NotApplicable("v_rad expansion has no oscillatory pair".into()))?;
    let v_osc = p1.cos_amp;
    let v_osc_prime = -q1.cos_amp;
    let ratio = discarded_ratio(va, p1.alpha, v_osc).max(discarded_ratio(vrad, p1.alpha, v_osc_prime));
    Ok(DominantApprox {
        v_ss: va.initial_value(),
        v_osc,
        v_osc_prime,
        omega1: p1.omega,
        alpha1: p1.alpha,
        worst_discarded_ratio: ratio,
        dominant: ratio <= DOMINANCE_THRESHOLD,
    })
}

/// Antenna chain for the closed-form steady-state estimate: series
/// resistance and matching inductor feeding `C` in series with the parallel
/// `L`, `R` radiation model, with optional terminal capacitance to ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedChain {
    pub c: f64,
    pub l: f64,
    pub r: f64,
    pub l_m: f64,
    /// Capacitance from the antenna terminal to ground.
    pub c_terminal: f64,
    /// Switch on-resistance between the source and the matching inductor.
    pub r_series: f64,
}

impl MatchedChain {
    /// Impedance seen by the source behind its resistance.
    pub fn impedance(&self, omega: f64) -> Complex64 {
        let j = Complex64::new(0.0, 1.0);
        let z_rad = (j * omega * self.l * self.r) / (self.r + j * omega * self.l);
        let z_ant = z_rad + 1.0 / (j * omega * self.c);
        let z_a = if self.c_terminal > 0.0 { 1.0 / (1.0 / z_ant + j * omega * self.c_terminal) } else { z_ant };
        z_a + j * omega * self.l_m + self.r_series
    }

    /// Radiation Q from the impedance slope, `ω|Z′|/(2·Re Z)`.
    pub fn q_rad(&self, omega: f64) -> f64 {
        let h = omega * 1e-6;
        let dz = (self.impedance(omega + h) - self.impedance(omega - h)) / (2.0 * h);
        omega * dz.norm() / (2.0 * self.impedance(omega).re)
    }

    /// Frequency where the input reactance crosses zero, searched near `f_guess`.
    pub fn resonance(&self, f_guess: f64) -> Option<f64> {
        let x = |f: f64| self.impedance(TAU * f).im;
        let (mut lo, mut hi) = (f_guess * 0.5, f_guess * 1.5);
        let n = 2000;
        let mut prev = lo;
        let mut found = None;
        for k in 1..=n {
            let f = lo + (hi - lo) * k as f64 / n as f64;
            if x(prev) < 0.0 && x(f) >= 0.0 {
                let d = (prev - f_guess).abs().min((f - f_guess).abs());
                if found.is_none_or(|(_, best)| d < best) {
                    found = Some(((prev, f), d));
                }
            }
            prev = f;
        }
        let ((a, b), _) = found?;
        lo = a;
        hi = b;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if x(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateEstimate {
    pub v_ss: f64,
    pub q_rad: f64,
    /// `estimate / exact` when an exact value was supplied.
    pub ratio: Option<f64>,
    pub warnings: Vec<String>,
}

/// `V_ss ≈ ½·Q_rad·V_cw` for `chain` driven at `f_c` from a source matched to
/// the chain's input resistance.
pub fn steady_state_estimate(chain: &MatchedChain, v_cw: f64, f_c: f64, exact: Option<f64>) -> Result<SteadyStateEstimate> {
    if !(f_c > 0.0) || !(v_cw.is_finite()) {
        return Err(Error::Validation("carrier frequency must be positive".into()));
    }
    let omega = TAU * f_c;
    let q = chain.q_rad(omega);
    let v_ss = 0.5 * q * v_cw;
    let mut warnings = Vec::new();
    if !q.is_finite() || chain.r.is_infinite() {
        warnings.push("lossless chain: radiation Q is unbounded".to_string());
    }
    let z = chain.impedance(omega);
    let detune = z.im.abs() / (2.0 * z.re);
    if detune > 0.5 {
        warnings.push(format!("drive is off resonance (|X|/R = {detune:.2}); estimate is not valid"));
    }
    let ratio = exact.map(|e| v_ss / e);
    Ok(SteadyStateEstimate { v_ss, q_rad: q, ratio, warnings })
}
