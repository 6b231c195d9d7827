//! Efficiency- and bandwidth-scalable LTI antenna model and its (ξ, χ) metric grid.
//!
//! The scaled antenna keeps the input resistance `R_a` fixed, splits it as
//! `R′_rad = ξηR_a`, `R′_Ω = (1 − ξη)R_a`, and scales the reactance by `ξχ`.
//! Its transfer function is `h′ = h·√ξ(1 − Γ′)/(1 − Γ)` with `h = √η(1 − Γ)`.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sim::Waveform;

/// Minimum number of transfer grid points.
pub const MIN_GRID_POINTS: usize = 1 << 14;

/// Largest fraction of waveform energy allowed outside the transfer grid.
pub const COVERAGE_LIMIT: f64 = 0.1;

/// `n` uniformly spaced angular frequencies covering `[f_lo, f_hi]` Hz.
pub fn uniform_grid(f_lo: f64, f_hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(f_lo >= 0.0 && f_hi > f_lo && n >= 3) {
        return Err(Error::Validation(format!("grid [{f_lo}, {f_hi}] Hz with {n} points is empty")));
    }
    Ok((0..n).map(|k| TAU * (f_lo + (f_hi - f_lo) * k as f64 / (n - 1) as f64)).collect())
}

/// Default grid: `[0.2, 3]·f_c` with [`MIN_GRID_POINTS`] points.
pub fn carrier_grid(f_c: f64) -> Result<Vec<f64>> {
    uniform_grid(0.2 * f_c, 3.0 * f_c, MIN_GRID_POINTS)
}

/// Linear interpolation on a uniform grid; `None` outside it.
fn interpolate(omega: &[f64], values: &[Complex64], w: f64) -> Option<Complex64> {
    let (lo, hi) = (omega[0], omega[omega.len() - 1]);
    if !(w >= lo && w <= hi) {
        return None;
    }
    let step = (hi - lo) / (omega.len() - 1) as f64;
    let x = (w - lo) / step;
    let i = (x.floor() as usize).min(omega.len() - 2);
    let t = x - i as f64;
    Some(values[i] * (1.0 - t) + values[i + 1] * t)
}

/// Series RLC antenna model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRlc {
    pub r: f64,
    pub l: f64,
    pub c: f64,
}

impl SeriesRlc {
    /// Antenna with untuned reactance `x_untuned` (capacitive, negative) at `f0`,
    /// series-tuned to resonance there, with resistance set so the matched
    /// 10 dB return-loss band has fractional width `rl10_bandwidth`.
    pub fn tuned(x_untuned: f64, f0: f64, rl10_bandwidth: f64) -> Result<SeriesRlc> {
        if !(x_untuned < 0.0 && f0 > 0.0 && rl10_bandwidth > 0.0) {
            return Err(Error::Validation("tuned antenna needs capacitive reactance and positive band".into()));
        }
        let w0 = TAU * f0;
        let x = -x_untuned;
        // |Γ|² ≤ 0.1 ⇔ |X| ≤ 2R/3, and X = x(u − 1/u) gives a fractional width of 2R/(3x).
        Ok(SeriesRlc { r: 1.5 * rl10_bandwidth * x, l: x / w0, c: 1.0 / (w0 * x) })
    }

    pub fn impedance(&self, omega: f64) -> Complex64 {
        Complex64::new(self.r, omega * self.l - 1.0 / (omega * self.c))
    }

    pub fn resonance(&self) -> f64 {
        1.0 / (self.l * self.c).sqrt()
    }

    /// `(1/R)·√(L/C)`.
    pub fn q(&self) -> f64 {
        (self.l / self.c).sqrt() / self.r
    }
}

/// Antenna impedance on a uniform grid with its efficiency and match.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaParameters {
    /// Angular frequencies, rad/s.
    pub omega: Vec<f64>,
    pub z_a: Vec<Complex64>,
    /// Input resistance at resonance; also the source impedance `Z₀`.
    pub r_a: f64,
    pub eta: f64,
    pub omega0: f64,
}

impl AntennaParameters {
    pub fn new(omega: Vec<f64>, z_a: Vec<Complex64>, omega0: f64, eta: f64) -> Result<AntennaParameters> {
        if omega.len() != z_a.len() || omega.len() < 3 {
            return Err(Error::Validation("impedance samples must match a grid of at least 3 points".into()));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Validation(format!("efficiency {eta} outside (0, 1]")));
        }
        let z0 = interpolate(&omega, &z_a, omega0)
            .ok_or_else(|| Error::Validation(format!("resonance {omega0} rad/s outside the grid")))?;
        if !(z0.re > 0.0) {
            return Err(Error::Validation("input resistance at resonance must be positive".into()));
        }
        Ok(AntennaParameters { omega, z_a, r_a: z0.re, eta, omega0 })
    }

    /// Sample `z(ω)` on `omega`.
    pub fn from_fn(omega: Vec<f64>, z: impl Fn(f64) -> Result<Complex64>, omega0: f64, eta: f64) -> Result<AntennaParameters> {
        let z_a = omega.iter().map(|&w| z(w)).collect::<Result<Vec<_>>>()?;
        AntennaParameters::new(omega, z_a, omega0, eta)
    }

    pub fn z0(&self) -> f64 {
        self.r_a
    }

    pub fn r_rad(&self) -> f64 {
        self.eta * self.r_a
    }

    pub fn r_ohm(&self) -> f64 {
        (1.0 - self.eta) * self.r_a
    }

    /// Radiation Q from the impedance slope at resonance.
    pub fn q_rad(&self) -> Result<f64> {
        q_from_impedance(&self.omega, &self.z_a, self.omega0, self.r_rad())
    }
}

/// Efficiency and Q scale factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub xi: f64,
    pub chi: f64,
}

impl ScaleParams {
    pub const IDENTITY: ScaleParams = ScaleParams { xi: 1.0, chi: 1.0 };

    fn check(&self, eta: f64) -> Result<()> {
        if !(self.xi > 0.0 && self.chi > 0.0 && self.xi.is_finite() && self.chi.is_finite()) {
            return Err(Error::Validation(format!("scale factors ξ = {}, χ = {} must be positive", self.xi, self.chi)));
        }
        if self.xi * eta > 1.0 {
            return Err(Error::UnphysicalEfficiency(self.xi * eta));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.xi == 1.0 && self.chi == 1.0
    }
}

/// `R_a + jξχX_a(ω)` on the antenna grid; `(1, 1)` returns `Z_a` itself.
pub fn scaled_impedance(p: &AntennaParameters, s: ScaleParams) -> Result<Vec<Complex64>> {
    s.check(p.eta)?;
    if s.is_identity() {
        return Ok(p.z_a.clone());
    }
    Ok(p.z_a.iter().map(|z| Complex64::new(p.r_a, s.xi * s.chi * z.im)).collect())
}

/// `(Z − Z₀)/(Z + Z₀)`; `omega` labels the error when `Z = −Z₀`.
pub fn reflection(z: Complex64, z0: f64, omega: f64) -> Result<Complex64> {
    if !(z0 > 0.0) {
        return Err(Error::Validation("reference impedance must be positive".into()));
    }
    if z.is_infinite() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let den = z + z0;
    if den.norm() == 0.0 {
        return Err(Error::Pole(omega));
    }
    Ok((z - z0) / den)
}

/// Complex gain from antenna input voltage to radiated field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub omega: Vec<f64>,
    pub h: Vec<Complex64>,
}

impl TransferFunction {
    pub fn at(&self, omega: f64) -> Option<Complex64> {
        interpolate(&self.omega, &self.h, omega)
    }
}

/// `h = √η(1 − Γ)` for the unscaled antenna.
pub fn transfer(p: &AntennaParameters) -> Result<TransferFunction> {
    let h = p
        .omega
        .iter()
        .zip(&p.z_a)
        .map(|(&w, &z)| Ok((1.0 - reflection(z, p.z0(), w)?) * p.eta.sqrt()))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferFunction { omega: p.omega.clone(), h })
}

/// `h′ = h·√ξ(1 − Γ′)/(1 − Γ)`; the identity scaling returns `h` unchanged.
pub fn scaled_transfer(p: &AntennaParameters, s: ScaleParams) -> Result<TransferFunction> {
    s.check(p.eta)?;
    let base = transfer(p)?;
    if s.is_identity() {
        return Ok(base);
    }
    let z_scaled = scaled_impedance(p, s)?;
    let h = p
        .omega
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let g = reflection(p.z_a[i], p.z0(), w)?;
            let one_minus = 1.0 - g;
            if one_minus.norm() == 0.0 {
                return Err(Error::Division(w));
            }
            let g_scaled = reflection(z_scaled[i], p.z0(), w)?;
            Ok(base.h[i] * s.xi.sqrt() * (1.0 - g_scaled) / one_minus)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferFunction { omega: p.omega.clone(), h })
}

/// Filter a real waveform by `tf`, taken as zero outside its grid.
///
/// The record is zero-padded to at least twice its length before the FFT so
/// the response does not wrap; the output keeps the input's time base.
pub fn apply_transfer(tf: &TransferFunction, waveform: &Waveform) -> Result<Waveform> {
    let n = waveform.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty waveform".into()));
    }
    let len = (2 * n).next_power_of_two();
    let fs = 1.0 / waveform.sample_interval;
    let mut buf: Vec<Complex64> = waveform.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let total: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
    let mut outside = 0.0;
    for k in 0..=len / 2 {
        let w = TAU * k as f64 * fs / len as f64;
        let g = match tf.at(w) {
            Some(g) => g,
            None => {
                let e = buf[k].norm_sqr() * if k == 0 || k == len / 2 { 1.0 } else { 2.0 };
                outside += e;
                Complex64::new(0.0, 0.0)
            }
        };
        buf[k] *= g;
        if k != 0 && k != len / 2 {
            buf[len - k] = buf[k].conj();
        }
    }
    if total > 0.0 && outside / total > COVERAGE_LIMIT {
        return Err(Error::Coverage(format!(
            "{:.1}% of the waveform energy lies outside [{:e}, {:e}] Hz",
            100.0 * outside / total,
            tf.omega[0] / TAU,
            tf.omega[tf.omega.len() - 1] / TAU
        )));
    }
    // Nyquist bin of a real signal must stay real.
    buf[len / 2] = Complex64::new(buf[len / 2].re, 0.0);
    planner.plan_fft_inverse(len).process(&mut buf);
    let samples = buf[..n].iter().map(|z| z.re / len as f64).collect();
    Waveform::new(&waveform.label, waveform.start, waveform.sample_interval, samples)
}

/// `ω₀·|Z′(ω₀)|/(2R)` with `Z′` from central differences on the grid,
/// interpolated between the two nodes bracketing `ω₀`.
pub fn q_from_impedance(omega: &[f64], z: &[Complex64], omega0: f64, resistance: f64) -> Result<f64> {
    if omega.len() != z.len() {
        return Err(Error::Validation("impedance samples must match the grid".into()));
    }
    if !(resistance > 0.0) {
        return Err(Error::Validation("resistance must be positive".into()));
    }
    let i = omega.partition_point(|&w| w <= omega0);
    if i < 2 || i + 1 >= omega.len() {
        return Err(Error::Stencil(omega0));
    }
    let slope = |k: usize| (z[k + 1] - z[k - 1]) / (omega[k + 1] - omega[k - 1]);
    let (a, b) = (i - 1, i);
    let t = (omega0 - omega[a]) / (omega[b] - omega[a]);
    let dz = slope(a) * (1.0 - t) + slope(b) * t;
    Ok(omega0 * dz.norm() / (2.0 * resistance))
}

/// Received power and EVM of one transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Mean symbol power before normalization.
    pub power: f64,
    pub evm_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub xi: f64,
    pub chi: f64,
    /// Symbol power relative to the `(1, 1)` antenna.
    pub avg_power_norm: f64,
    pub evm_db: f64,
}

/// Pass `source` through every `(ξ, χ)` antenna and measure the result.
///
/// Powers are normalized by the `(1, 1)` measurement, which is evaluated
/// whether or not it is in the lists.
pub fn grid_metrics<F>(p: &AntennaParameters, xis: &[f64], chis: &[f64], source: &Waveform, measure: F) -> Result<Vec<GridRow>>
where
    F: Fn(&Waveform) -> Result<Measurement> + Sync,
{
    if xis.is_empty() || chis.is_empty() {
        return Err(Error::Validation("ξ and χ lists must be non-empty".into()));
    }
    let run = |s: ScaleParams| -> Result<Measurement> {
        let tf = scaled_transfer(p, s)?;
        measure(&apply_transfer(&tf, source)?)
    };
    let reference = run(ScaleParams::IDENTITY)?;
    if !(reference.power > 0.0) {
        return Err(Error::Reference);
    }
    let points: Vec<ScaleParams> = xis.iter().flat_map(|&xi| chis.iter().map(move |&chi| ScaleParams { xi, chi })).collect();
    points
        .par_iter()
        .map(|&s| {
            let m = if s.is_identity() { reference } else { run(s)? };
            Ok(GridRow { xi: s.xi, chi: s.chi, avg_power_norm: m.power / reference.power, evm_db: m.evm_db })
        })
        .collect()
}

/// Rows `xi,chi,avg_power_norm,evm_db`.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "xi,chi,avg_power_norm,evm_db")?;
    for r in rows {
        writeln!(out, "{},{},{:e},{:e}", r.xi, r.chi, r.avg_power_norm, r.evm_db)?;
    }
    Ok(())
}
