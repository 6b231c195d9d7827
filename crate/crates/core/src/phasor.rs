//! Sinusoidal steady state of a single-source drive.
//!
//! A phasor `P` at angular frequency `ω` stands for the signal `Re(P·e^{jωt})`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::circuit::{CircuitState, StateSpaceModel};
use crate::error::{Error, Result};
use crate::netlist::{Netlist, SourceShape};

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub omega: f64,
    pub source: String,
    /// Complex source amplitude `A·e^{jφ}`.
    pub input: Complex64,
    pub states: DVector<Complex64>,
    pub probes: BTreeMap<String, Complex64>,
    model: StateSpaceModel,
}

impl SteadyState {
    pub fn frequency(&self) -> f64 {
        self.omega / TAU
    }

    pub fn probe(&self, name: &str) -> Result<Complex64> {
        self.probes
            .get(name)
            .copied()
            .ok_or_else(|| Error::Validation(format!("unknown probe '{name}'")))
    }

    /// Phasor of `v(p) − v(n)` for any node pair of the model.
    pub fn voltage(&self, p: &str, n: &str) -> Result<Complex64> {
        let (c, d) = self.model.voltage_rows(p, n)?;
        let k = self.model.input_index(&self.source).expect("source exists");
        Ok(dot(&c, &self.states) + d[k] * self.input)
    }

    /// Time-domain element values at `t` on the steady-state trajectory.
    pub fn circuit_state(&self, t: f64) -> CircuitState {
        let rot = Complex64::from_polar(1.0, self.omega * t);
        let z = DVector::from_iterator(self.states.len(), self.states.iter().map(|p| (p * rot).re));
        let mut u = DVector::zeros(self.model.inputs.len());
        u[self.model.input_index(&self.source).expect("source exists")] = (self.input * rot).re;
        self.model.circuit_state(t, &z, &u)
    }

    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }
}

fn dot(c: &DVector<f64>, z: &DVector<Complex64>) -> Complex64 {
    c.iter().zip(z.iter()).map(|(a, b)| b * *a).sum()
}

/// True when every eigenvalue of `a` lies strictly in the left half-plane.
pub fn is_asymptotically_stable(a: &DMatrix<f64>) -> bool {
    a.nrows() == 0 || a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Steady-state phasors of every state and probe when only `source` is active
/// with the sinusoid `shape`; other sources are held at zero.
pub fn steady_state_phasor(model: &StateSpaceModel, source: &str, shape: &SourceShape) -> Result<SteadyState> {
    let (amplitude, frequency, phase) = match *shape {
        SourceShape::Sinusoid { amplitude, frequency, phase } => (amplitude, frequency, phase),
        _ => return Err(Error::Validation("steady-state phasor needs a sinusoidal source".into())),
    };
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::Validation("source frequency must be positive".into()));
    }
    let k = model
        .input_index(source)
        .ok_or_else(|| Error::Validation(format!("unknown source '{source}'")))?;
    if !is_asymptotically_stable(&model.a) {
        return Err(Error::Conditioning("model is not asymptotically stable".into()));
    }
    let omega = TAU * frequency;
    let n = model.order();
    let jw = Complex64::new(0.0, omega);
    let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        let d = if i == j { jw } else { Complex64::new(0.0, 0.0) };
        d - Complex64::new(model.a[(i, j)], 0.0)
    });
    let rhs = DVector::<Complex64>::from_fn(n, |i, _| Complex64::new(model.b[(i, k)], 0.0) + jw * model.b_dot[(i, k)]);
    let input = Complex64::from_polar(amplitude, phase);
    let states = if n == 0 {
        DVector::zeros(0)
    } else {
        let lu = m.clone().lu();
        let diag: Vec<f64> = (0..n).map(|i| lu.u()[(i, i)].norm()).collect();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if !(lo > 1e-14 * hi) {
            return Err(Error::Conditioning(format!("jωI − A is singular at {frequency} Hz")));
        }
        let x = lu.solve(&rhs).ok_or_else(|| Error::Conditioning(format!("jωI − A is singular at {frequency} Hz")))?;
        x * input
    };
    if states.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Conditioning("non-finite steady-state phasor".into()));
    }
    let mut probes = BTreeMap::new();
    for (p, name) in model.outputs.iter().enumerate() {
        let c = model.c_out.row(p).transpose();
        probes.insert(name.clone(), dot(&c, &states) + model.d[(p, k)] * input);
    }
    Ok(SteadyState { omega, source: source.to_string(), input, states, probes, model: model.clone() })
}

/// Steady state of `netlist` in configuration `config` driven by `source`'s
/// own sinusoid.
pub fn netlist_steady_state(
    netlist: &Netlist,
    config: &crate::netlist::SwitchConfiguration,
    source: &str,
) -> Result<SteadyState> {
    let s = netlist
        .source(source)
        .ok_or_else(|| Error::Validation(format!("unknown source '{source}'")))?;
    let (shape, _) = s.waveform.shape_at(0.0);
    let model = crate::circuit::assemble(netlist, config)?;
    steady_state_phasor(&model, source, &shape)
}

/// Instants in `[t0, t1]` where `Re(P·e^{j(ωt + θ)})` is maximal.
///
/// `phasor` is taken for zero source phase; `source_phase` rotates it.
pub fn peak_times(phasor: Complex64, source_phase: f64, frequency: f64, window: (f64, f64)) -> Result<Vec<f64>> {
    if phasor.norm() == 0.0 || !phasor.norm().is_finite() {
        return Err(Error::NoPeak);
    }
    if !(frequency > 0.0) {
        return Err(Error::Validation("frequency must be positive".into()));
    }
    let period = 1.0 / frequency;
    let base = -(phasor.arg() + source_phase) / TAU * period;
    let k0 = ((window.0 - base) / period).ceil() as i64;
    let mut out = Vec::new();
    let mut k = k0;
    loop {
        let t = base + k as f64 * period;
        if t > window.1 {
            break;
        }
        if t >= window.0 {
            out.push(t);
        }
        k += 1;
    }
    Ok(out)
}

/// Last peak at or before `t`.
pub fn peak_at_or_before(phasor: Complex64, source_phase: f64, frequency: f64, t: f64) -> Result<f64> {
    if phasor.norm() == 0.0 || !phasor.norm().is_finite() {
        return Err(Error::NoPeak);
    }
    let period = 1.0 / frequency;
    let base = -(phasor.arg() + source_phase) / TAU * period;
    let k = ((t - base) / period).floor();
    let mut peak = base + k * period;
    if peak > t {
        peak -= period;
    }
    Ok(peak)
}

/// Input impedance seen by a Norton/Thevenin source with series resistance.
///
/// `terminal` is the phasor across the source's internal terminals, so
/// `Z_in = R_s·v_p/(V − v_p)`.
pub fn input_impedance(netlist: &Netlist, config: &crate::netlist::SwitchConfiguration, source: &str, frequency: f64) -> Result<Complex64> {
    let s = netlist
        .source(source)
        .ok_or_else(|| Error::Validation(format!("unknown source '{source}'")))?;
    if s.series_resistance <= 0.0 {
        return Err(Error::Validation(format!("source '{source}' has no series resistance")));
    }
    let model = crate::circuit::assemble(netlist, config)?;
    let shape = SourceShape::Sinusoid { amplitude: 1.0, frequency, phase: 0.0 };
    let ss = steady_state_phasor(&model, source, &shape)?;
    let vp = ss.voltage(&s.nodes[0], &s.nodes[1])?;
    let drop = ss.input - vp;
    if drop.norm() == 0.0 {
        return Err(Error::Conditioning("no current drawn from source".into()));
    }
    Ok(vp * s.series_resistance / drop)
}
