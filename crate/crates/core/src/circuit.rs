//! Piecewise-LTI state-space assembly for one switch configuration.
//!
//! States are the voltages of capacitor groups (capacitors sharing a node pair,
//! with ground and ideal-source nodes contracted into one reference) and the
//! currents of inductor groups (inductors in series through an otherwise
//! unconnected node). Capacitor-free nodes are eliminated algebraically.
//!
//! The dynamics read `ż = A z + B u + B_dot u̇` and outputs `y = C_out z + D u`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::netlist::{Element, ElementKind, Netlist, SwitchConfiguration, UnionFind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRole {
    CapacitorVoltage,
    InductorCurrent,
}

/// One physical element folded into a state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMember {
    pub element: String,
    /// Capacitance or inductance.
    pub value: f64,
    /// Element quantity is `sign·state + input_offset·u`.
    pub sign: f64,
    pub input_offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateLabel {
    pub name: String,
    pub role: StateRole,
    pub members: Vec<StateMember>,
    /// Merged capacitance or series inductance.
    pub total: f64,
}

#[derive(Debug, Clone)]
struct NodeMap {
    state_row: DVector<f64>,
    input_row: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Coefficient of the input derivative, nonzero when a capacitor touches an ideal source node.
    pub b_dot: DMatrix<f64>,
    pub c_out: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub states: Vec<StateLabel>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub configuration: SwitchConfiguration,
    ground: String,
    nodes: BTreeMap<String, NodeMap>,
}

/// Capacitor voltages and inductor currents keyed by element id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CircuitState {
    pub time: f64,
    pub values: BTreeMap<String, f64>,
}

impl CircuitState {
    pub fn new(time: f64) -> Self {
        Self { time, values: BTreeMap::new() }
    }

    pub fn with(mut self, element: &str, value: f64) -> Self {
        self.values.insert(element.to_string(), value);
        self
    }
}

impl StateSpaceModel {
    pub fn order(&self) -> usize {
        self.states.len()
    }

    pub fn input_index(&self, source: &str) -> Option<usize> {
        self.inputs.iter().position(|s| s == source)
    }

    pub fn output_index(&self, probe: &str) -> Option<usize> {
        self.outputs.iter().position(|s| s == probe)
    }

    /// Rows `(c, d)` with `v(p) − v(n) = c·z + d·u`.
    pub fn voltage_rows(&self, p: &str, n: &str) -> Result<(DVector<f64>, DVector<f64>)> {
        let row = |node: &str| -> Result<(DVector<f64>, DVector<f64>)> {
            if node == self.ground {
                return Ok((DVector::zeros(self.order()), DVector::zeros(self.inputs.len())));
            }
            self.nodes
                .get(node)
                .map(|m| (m.state_row.clone(), m.input_row.clone()))
                .ok_or_else(|| Error::Validation(format!("unknown node '{node}'")))
        };
        let (cp, dp) = row(p)?;
        let (cn, dn) = row(n)?;
        Ok((cp - cn, dp - dn))
    }

    /// State vector from element values.
    ///
    /// A state takes the value of any member present in `state`; members that
    /// disagree are combined by capacitance (or inductance) weighting. States
    /// with no member present start at zero.
    pub fn state_vector(&self, state: &CircuitState, u: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.order());
        for (k, label) in self.states.iter().enumerate() {
            let mut estimates: Vec<(f64, f64)> = Vec::new();
            for m in &label.members {
                if let Some(&v) = state.values.get(&m.element) {
                    let offset: f64 = m.input_offset.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                    estimates.push(((v - offset) / m.sign, m.value));
                }
            }
            z[k] = match estimates.as_slice() {
                [] => 0.0,
                [(x, _)] => *x,
                many if many.iter().all(|(x, _)| *x == many[0].0) => many[0].0,
                // Charge (or flux) weighted mean when members disagree.
                many => {
                    let w: f64 = many.iter().map(|(_, c)| c).sum();
                    many.iter().map(|(x, c)| x * c).sum::<f64>() / w
                }
            };
        }
        z
    }

    /// Element values of every member at state `z` and input `u`.
    pub fn circuit_state(&self, time: f64, z: &DVector<f64>, u: &DVector<f64>) -> CircuitState {
        let mut out = CircuitState::new(time);
        for (k, label) in self.states.iter().enumerate() {
            for m in &label.members {
                let offset: f64 = m.input_offset.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                out.values.insert(m.element.clone(), m.sign * z[k] + offset);
            }
        }
        out
    }

    /// Stored energy ½ΣCv² + ½ΣLi² over all members.
    pub fn energy(&self, z: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let mut e = 0.0;
        for (k, label) in self.states.iter().enumerate() {
            for m in &label.members {
                let offset: f64 = m.input_offset.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                let q = m.sign * z[k] + offset;
                e += 0.5 * m.value * q * q;
            }
        }
        e
    }

    pub fn state_names(&self) -> Vec<&str> {
        self.states.iter().map(|s| s.name.as_str()).collect()
    }
}

struct InductorGroup {
    nodes: [usize; 2],
    members: Vec<(String, f64, f64)>,
    total: f64,
}

struct CapGroup {
    ends: [usize; 2],
    members: Vec<(usize, f64)>,
    total: f64,
}

/// Assemble the state-space model of `netlist` in configuration `config`.
pub fn assemble(netlist: &Netlist, config: &SwitchConfiguration) -> Result<StateSpaceModel> {
    netlist.validate()?;
    let elements = netlist.effective_elements(config)?;
    let node_names = netlist.nodes();
    let nn = node_names.len();
    let index: BTreeMap<&str, usize> = node_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let ground = index[netlist.ground.as_str()];
    let m_in = netlist.sources.len();

    // Ideal sources pin a node to ±u_k; others become Norton equivalents.
    let mut pd = DMatrix::<f64>::zeros(nn, m_in);
    let mut driven = vec![false; nn];
    let mut g_all = DMatrix::<f64>::zeros(nn, nn);
    let mut bn_all = DMatrix::<f64>::zeros(nn, m_in);
    let mut source_nodes = BTreeSet::new();
    for (k, s) in netlist.sources.iter().enumerate() {
        let (p, n) = (index[s.nodes[0].as_str()], index[s.nodes[1].as_str()]);
        source_nodes.insert(p);
        source_nodes.insert(n);
        if s.series_resistance > 0.0 {
            let g = 1.0 / s.series_resistance;
            stamp_conductance(&mut g_all, p, n, g);
            bn_all[(p, k)] += g;
            bn_all[(n, k)] -= g;
        } else {
            let (node, sign) = if n == ground {
                (p, 1.0)
            } else if p == ground {
                (n, -1.0)
            } else {
                return Err(Error::Topology {
                    reason: "ideal source needs a grounded terminal".into(),
                    elements: vec![s.id.clone()],
                });
            };
            if driven[node] {
                return Err(Error::Topology {
                    reason: "ideal sources in parallel".into(),
                    elements: vec![s.id.clone()],
                });
            }
            driven[node] = true;
            pd[(node, k)] = sign;
        }
    }
    let fixed = |i: usize| i == ground || driven[i];

    for e in elements.iter().filter(|e| e.kind == ElementKind::Resistor) {
        stamp_conductance(&mut g_all, index[e.nodes[0].as_str()], index[e.nodes[1].as_str()], 1.0 / e.value);
    }

    let (inductors, interior) = merge_series_inductors(netlist, &elements, &index, &source_nodes, &fixed);

    let caps: Vec<&Element> = elements.iter().filter(|e| e.kind == ElementKind::Capacitor).collect();
    let mut c_all = DMatrix::<f64>::zeros(nn, nn);
    for c in &caps {
        stamp_conductance(&mut c_all, index[c.nodes[0].as_str()], index[c.nodes[1].as_str()], c.value);
    }

    // Contracted vertex 0 is the reference (ground plus driven nodes); free node j maps to j + 1.
    let free: Vec<usize> = (0..nn).filter(|&i| !fixed(i) && !interior.contains(&i)).collect();
    let nf = free.len();
    let mut free_pos = vec![usize::MAX; nn];
    for (j, &i) in free.iter().enumerate() {
        free_pos[i] = j;
    }
    let contracted = |i: usize| if fixed(i) { 0 } else { free_pos[i] + 1 };

    let mut groups: Vec<CapGroup> = Vec::new();
    for (ci, c) in caps.iter().enumerate() {
        let (a, b) = (contracted(index[c.nodes[0].as_str()]), contracted(index[c.nodes[1].as_str()]));
        if a == b {
            continue;
        }
        if let Some(g) = groups.iter_mut().find(|g| (g.ends == [a, b]) || (g.ends == [b, a])) {
            let sign = if g.ends == [a, b] { 1.0 } else { -1.0 };
            g.members.push((ci, sign));
            g.total += c.value;
        } else {
            groups.push(CapGroup { ends: [a, b], members: vec![(ci, 1.0)], total: c.value });
        }
    }

    let mut uf = UnionFind::new(nf + 1);
    for (gi, g) in groups.iter().enumerate() {
        if !uf.union(g.ends[0], g.ends[1]) {
            let loop_groups = cycle_through(&groups[..gi], g.ends[0], g.ends[1]);
            let mut names: Vec<String> = Vec::new();
            for &k in loop_groups.iter().chain(std::iter::once(&gi)) {
                for &(ci, _) in &groups[k].members {
                    names.push(caps[ci].id.clone());
                }
            }
            return Err(Error::Topology { reason: "capacitor loop".into(), elements: names });
        }
    }
    let mcap = groups.len();

    // v_F = T x + N y with D T = I and D N = 0.
    let mut t = DMatrix::<f64>::zeros(nf, mcap);
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nf + 1];
    for (k, g) in groups.iter().enumerate() {
        adjacency[g.ends[0]].push((g.ends[1], k));
        adjacency[g.ends[1]].push((g.ends[0], k));
    }
    let mut visited = vec![false; nf + 1];
    let mut null_components: Vec<Vec<usize>> = Vec::new();
    for root in 0..=nf {
        if visited[root] {
            continue;
        }
        let mut component = Vec::new();
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        let mut rows: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
        rows.insert(root, DVector::zeros(mcap));
        while let Some(u) = queue.pop_front() {
            if u != 0 {
                component.push(u - 1);
            }
            for &(w, k) in &adjacency[u] {
                if visited[w] {
                    continue;
                }
                visited[w] = true;
                let mut r = rows[&u].clone();
                // x_k = v(ends[0]) − v(ends[1]).
                r[k] += if groups[k].ends[0] == w { 1.0 } else { -1.0 };
                rows.insert(w, r);
                queue.push_back(w);
            }
        }
        for (v, r) in rows {
            if v != 0 {
                t.set_row(v - 1, &r.transpose());
            }
        }
        if root != 0 {
            null_components.push(component);
        }
    }
    let r = null_components.len();
    let mut nmat = DMatrix::<f64>::zeros(nf, r);
    for (j, comp) in null_components.iter().enumerate() {
        for &f in comp {
            nmat[(f, j)] = 1.0;
        }
    }

    let mut pf = DMatrix::<f64>::zeros(nn, nf);
    for (j, &i) in free.iter().enumerate() {
        pf[(i, j)] = 1.0;
    }
    let nl = inductors.len();
    let mut e_all = DMatrix::<f64>::zeros(nn, nl);
    for (k, l) in inductors.iter().enumerate() {
        e_all[(l.nodes[0], k)] += 1.0;
        e_all[(l.nodes[1], k)] -= 1.0;
    }

    let g_ff = pf.transpose() * &g_all * &pf;
    let g_fu = pf.transpose() * &g_all * &pd - pf.transpose() * &bn_all;
    let e_f = pf.transpose() * &e_all;
    let c_fu = pf.transpose() * &c_all * &pd;
    let e_u = e_all.transpose() * &pd;

    if r > 0 {
        let leak = nmat.transpose() * &c_fu;
        if leak.iter().any(|v| *v != 0.0) {
            return Err(Error::Topology {
                reason: "capacitor-only island driven by an ideal source".into(),
                elements: Vec::new(),
            });
        }
    }

    // Algebraic block: (Nᵀ G N) y = −Nᵀ (G T x + E i + G_u u).
    let (px, pi, pu) = if r == 0 {
        (t.clone(), DMatrix::zeros(nf, nl), DMatrix::zeros(nf, m_in))
    } else {
        let mmat = nmat.transpose() * &g_ff * &nmat;
        let svd = mmat.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-13 * smax) || smax == 0.0 {
            let mut names: Vec<String> = Vec::new();
            for comp in &null_components {
                for &f in comp {
                    for (k, l) in inductors.iter().enumerate() {
                        if l.nodes.contains(&free[f]) {
                            names.extend(inductors[k].members.iter().map(|m| m.0.clone()));
                        }
                    }
                }
            }
            names.sort();
            names.dedup();
            return Err(Error::Topology { reason: "inductor cutset".into(), elements: names });
        }
        let lu = mmat.lu();
        let solve = |rhs: DMatrix<f64>| -> DMatrix<f64> { lu.solve(&rhs).expect("nonsingular") };
        let ny = nmat.transpose();
        let yx = solve(-(&ny * &g_ff * &t));
        let yi = solve(-(&ny * &e_f));
        let yu = solve(-(&ny * &g_fu));
        (&t + &nmat * yx, &nmat * yi, &nmat * yu)
    };

    let n = mcap + nl;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, m_in);
    let mut b_dot = DMatrix::<f64>::zeros(n, m_in);
    if mcap > 0 {
        let cinv = DMatrix::from_diagonal(&DVector::from_iterator(mcap, groups.iter().map(|g| 1.0 / g.total)));
        let proj = &cinv * t.transpose();
        let axx = -(&proj * &g_ff * &px);
        let axi = -(&proj * (&g_ff * &pi + &e_f));
        let bx = -(&proj * (&g_ff * &pu + &g_fu));
        let bdx = -(&proj * &c_fu);
        a.view_mut((0, 0), (mcap, mcap)).copy_from(&axx);
        a.view_mut((0, mcap), (mcap, nl)).copy_from(&axi);
        b.view_mut((0, 0), (mcap, m_in)).copy_from(&bx);
        b_dot.view_mut((0, 0), (mcap, m_in)).copy_from(&bdx);
    }
    if nl > 0 {
        let linv = DMatrix::from_diagonal(&DVector::from_iterator(nl, inductors.iter().map(|l| 1.0 / l.total)));
        let et = e_f.transpose();
        a.view_mut((mcap, 0), (nl, mcap)).copy_from(&(&linv * &et * &px));
        a.view_mut((mcap, mcap), (nl, nl)).copy_from(&(&linv * &et * &pi));
        b.view_mut((mcap, 0), (nl, m_in)).copy_from(&(&linv * (&et * &pu + &e_u)));
    }

    // Node voltage rows over z = [x; i].
    let mut nodes = BTreeMap::new();
    for (i, name) in node_names.iter().enumerate() {
        if i == ground || interior.contains(&i) {
            continue;
        }
        let (state_row, input_row) = if fixed(i) {
            (DVector::zeros(n), pd.row(i).transpose())
        } else {
            let j = free_pos[i];
            let mut s = DVector::zeros(n);
            for k in 0..mcap {
                s[k] = px[(j, k)];
            }
            for k in 0..nl {
                s[mcap + k] = pi[(j, k)];
            }
            (s, pu.row(j).transpose())
        };
        nodes.insert(name.clone(), NodeMap { state_row, input_row });
    }

    let mut states = Vec::with_capacity(n);
    for g in &groups {
        let members: Vec<StateMember> = g
            .members
            .iter()
            .map(|&(ci, sign)| {
                let c = caps[ci];
                let (ia, ib) = (index[c.nodes[0].as_str()], index[c.nodes[1].as_str()]);
                let offset = (pd.row(ia) - pd.row(ib)).transpose();
                StateMember { element: c.id.clone(), value: c.value, sign, input_offset: offset.iter().copied().collect() }
            })
            .collect();
        let name = members.iter().map(|m| m.element.as_str()).collect::<Vec<_>>().join("+");
        states.push(StateLabel { name, role: StateRole::CapacitorVoltage, members, total: g.total });
    }
    for l in &inductors {
        let members: Vec<StateMember> = l
            .members
            .iter()
            .map(|(id, sign, value)| StateMember {
                element: id.clone(),
                value: *value,
                sign: *sign,
                input_offset: vec![0.0; m_in],
            })
            .collect();
        let name = members.iter().map(|m| m.element.as_str()).collect::<Vec<_>>().join("+");
        states.push(StateLabel { name, role: StateRole::InductorCurrent, members, total: l.total });
    }

    let mut model = StateSpaceModel {
        a,
        b,
        b_dot,
        c_out: DMatrix::zeros(0, n),
        d: DMatrix::zeros(0, m_in),
        states,
        inputs: netlist.sources.iter().map(|s| s.id.clone()).collect(),
        outputs: Vec::new(),
        configuration: config.clone(),
        ground: netlist.ground.clone(),
        nodes,
    };
    let p = netlist.probes.len();
    let mut c_out = DMatrix::zeros(p, n);
    let mut d = DMatrix::zeros(p, m_in);
    for (k, probe) in netlist.probes.iter().enumerate() {
        let (c, dd) = model.voltage_rows(&probe.nodes[0], &probe.nodes[1])?;
        c_out.set_row(k, &c.transpose());
        d.set_row(k, &dd.transpose());
    }
    model.c_out = c_out;
    model.d = d;
    model.outputs = netlist.probes.iter().map(|p| p.name.clone()).collect();
    Ok(model)
}

fn stamp_conductance(m: &mut DMatrix<f64>, a: usize, b: usize, g: f64) {
    m[(a, a)] += g;
    m[(b, b)] += g;
    m[(a, b)] -= g;
    m[(b, a)] -= g;
}

/// Groups on the forest path between `from` and `to`.
fn cycle_through(groups: &[CapGroup], from: usize, to: usize) -> Vec<usize> {
    let mut prev: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for (k, g) in groups.iter().enumerate() {
            let w = if g.ends[0] == u {
                g.ends[1]
            } else if g.ends[1] == u {
                g.ends[0]
            } else {
                continue;
            };
            if seen.insert(w) {
                prev.insert(w, (u, k));
                queue.push_back(w);
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = to;
    while let Some(&(u, k)) = prev.get(&cur) {
        path.push(k);
        cur = u;
    }
    path
}

/// Merge inductor chains through nodes that touch nothing else.
///
/// Returns the groups and the interior nodes that disappeared.
fn merge_series_inductors(
    netlist: &Netlist,
    elements: &[Element],
    index: &BTreeMap<&str, usize>,
    source_nodes: &BTreeSet<usize>,
    fixed: &dyn Fn(usize) -> bool,
) -> (Vec<InductorGroup>, BTreeSet<usize>) {
    let mut interior = BTreeSet::new();
    let mut groups: Vec<InductorGroup> = elements
        .iter()
        .filter(|e| e.kind == ElementKind::Inductor)
        .map(|e| InductorGroup {
            nodes: [index[e.nodes[0].as_str()], index[e.nodes[1].as_str()]],
            members: vec![(e.id.clone(), 1.0, e.value)],
            total: e.value,
        })
        .collect();
    let mut protected: BTreeSet<usize> = source_nodes.clone();
    for p in &netlist.probes {
        for n in &p.nodes {
            protected.insert(index[n.as_str()]);
        }
    }
    let mut other_degree: BTreeMap<usize, usize> = BTreeMap::new();
    for e in elements.iter().filter(|e| e.kind != ElementKind::Inductor) {
        for n in &e.nodes {
            *other_degree.entry(index[n.as_str()]).or_default() += 1;
        }
    }
    loop {
        let mut merged = false;
        let candidates: BTreeSet<usize> = groups.iter().flat_map(|g| g.nodes).collect();
        for m in candidates {
            if fixed(m) || protected.contains(&m) || other_degree.get(&m).copied().unwrap_or(0) > 0 {
                continue;
            }
            let touching: Vec<usize> = (0..groups.len()).filter(|&k| groups[k].nodes.contains(&m)).collect();
            if touching.len() != 2 {
                continue;
            }
            let (k1, k2) = (touching[0], touching[1]);
            let g2 = groups.remove(k2);
            let g1 = &mut groups[k1];
            // Orient g1 as x → m and g2 as m → y.
            if g1.nodes[0] == m {
                g1.nodes.swap(0, 1);
                g1.members.iter_mut().for_each(|mm| mm.1 = -mm.1);
            }
            let (y, flip) = if g2.nodes[0] == m { (g2.nodes[1], 1.0) } else { (g2.nodes[0], -1.0) };
            if y == g1.nodes[0] {
                // Two inductors closing a loop on themselves; leave them alone.
                groups.insert(k2, g2);
                continue;
            }
            g1.nodes[1] = y;
            g1.members.extend(g2.members.into_iter().map(|(id, s, v)| (id, s * flip, v)));
            g1.total += g2.total;
            interior.insert(m);
            merged = true;
            break;
        }
        if !merged {
            break;
        }
    }
    (groups, interior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::SwitchPosition;

    fn rc_netlist(extra: &str) -> Netlist {
        let text = format!(
            r#"
ground = "0"
[[elements]]
id = "R1"
kind = "resistor"
value = "1kOhm"
nodes = ["in", "out"]
[[elements]]
id = "C1"
kind = "capacitor"
value = "1nF"
nodes = ["out", "0"]
[[sources]]
id = "V1"
kind = "dc"
level = "1V"
nodes = ["in", "0"]
[[probes]]
name = "v_out"
nodes = ["out", "0"]
{extra}
"#
        );
        Netlist::from_toml(&text).unwrap()
    }

    #[test]
    fn rc_single_state() {
        let n = rc_netlist("");
        let m = assemble(&n, &SwitchConfiguration::new()).unwrap();
        assert_eq!(m.order(), 1);
        assert!((m.a[(0, 0)] + 1.0 / (1e3 * 1e-9)).abs() < 1e-6);
        assert!((m.b[(0, 0)] - 1.0 / (1e3 * 1e-9)).abs() < 1e-6);
        assert_eq!(m.c_out[(0, 0)], 1.0);
    }

    #[test]
    fn parallel_capacitors_merge() {
        let n = rc_netlist(
            "[[elements]]\nid = \"C2\"\nkind = \"capacitor\"\nvalue = \"1nF\"\nnodes = [\"0\", \"out\"]\n",
        );
        let m = assemble(&n, &SwitchConfiguration::new()).unwrap();
        assert_eq!(m.order(), 1);
        assert_eq!(m.states[0].total, 2e-9);
        assert_eq!(m.states[0].members[1].sign, -1.0);
        assert!((m.a[(0, 0)] + 1.0 / (1e3 * 2e-9)).abs() < 1e-6);
    }

    #[test]
    fn capacitor_loop_rejected() {
        let n = rc_netlist(
            "[[elements]]\nid = \"C2\"\nkind = \"capacitor\"\nvalue = \"1nF\"\nnodes = [\"out\", \"x\"]\n\
             [[elements]]\nid = \"C3\"\nkind = \"capacitor\"\nvalue = \"1nF\"\nnodes = [\"x\", \"0\"]\n",
        );
        match assemble(&n, &SwitchConfiguration::new()) {
            Err(Error::Topology { reason, elements }) => {
                assert_eq!(reason, "capacitor loop");
                let mut e = elements.clone();
                e.sort();
                assert_eq!(e, vec!["C1", "C2", "C3"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inductor_cutset_rejected() {
        let n = rc_netlist(
            "[[elements]]\nid = \"L1\"\nkind = \"inductor\"\nvalue = \"1uH\"\nnodes = [\"out\", \"x\"]\n\
             [[elements]]\nid = \"L2\"\nkind = \"inductor\"\nvalue = \"1uH\"\nnodes = [\"x\", \"0\"]\n\
             [[elements]]\nid = \"L3\"\nkind = \"inductor\"\nvalue = \"1uH\"\nnodes = [\"x\", \"y\"]\n\
             [[elements]]\nid = \"L4\"\nkind = \"inductor\"\nvalue = \"1uH\"\nnodes = [\"y\", \"0\"]\n",
        );
        match assemble(&n, &SwitchConfiguration::new()) {
            Err(Error::Topology { reason, elements }) => {
                assert_eq!(reason, "inductor cutset");
                assert!(elements.contains(&"L1".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn series_inductors_merge() {
        let n = rc_netlist(
            "[[elements]]\nid = \"L1\"\nkind = \"inductor\"\nvalue = \"1uH\"\nnodes = [\"out\", \"x\"]\n\
             [[elements]]\nid = \"L2\"\nkind = \"inductor\"\nvalue = \"2uH\"\nnodes = [\"0\", \"x\"]\n",
        );
        let m = assemble(&n, &SwitchConfiguration::new()).unwrap();
        assert_eq!(m.order(), 2);
        let l = &m.states[1];
        assert_eq!(l.role, StateRole::InductorCurrent);
        assert!((l.total - 3e-6).abs() < 1e-18);
        assert_eq!(l.members[0].sign, -l.members[1].sign);
    }

    #[test]
    fn ideal_source_capacitor_offsets() {
        // C2 hangs between the ideal source node and `out`, so its voltage is x − u.
        let n = rc_netlist(
            "[[elements]]\nid = \"C2\"\nkind = \"capacitor\"\nvalue = \"3nF\"\nnodes = [\"out\", \"in\"]\n",
        );
        let m = assemble(&n, &SwitchConfiguration::new()).unwrap();
        assert_eq!(m.order(), 1);
        let c2 = m.states[0].members.iter().find(|mm| mm.element == "C2").unwrap();
        assert_eq!(c2.input_offset, vec![-1.0]);
        // 4 nF total, derivative feedthrough 3/4 of u̇.
        assert!((m.b_dot[(0, 0)] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn switch_positions_change_order() {
        let text = r#"
ground = "0"
[[elements]]
id = "C1"
kind = "capacitor"
value = "1nF"
nodes = ["out", "0"]
[[elements]]
id = "R1"
kind = "resistor"
value = "1kOhm"
nodes = ["in", "0"]
[[switches]]
id = "S1"
kind = "spst"
nodes = ["in", "out"]
r_on = "5Ohm"
r_off = "1MOhm"
c_parallel = "1pF"
"#;
        let n = Netlist::from_toml(text).unwrap();
        let on = assemble(&n, &SwitchConfiguration::new().with("S1", SwitchPosition::On)).unwrap();
        let off = assemble(&n, &SwitchConfiguration::new().with("S1", SwitchPosition::Off)).unwrap();
        assert_eq!(on.order(), 1);
        assert_eq!(off.order(), 2);
        assert_eq!(off.state_names(), vec!["C1", "S1.csw"]);
    }
}
