//! Damped-sinusoid least-squares fit.
//!
//! Model `c + e^{−ατ}(a cos ωτ + b sin ωτ)` with `τ = t − t₀`. The linear
//! coefficients are eliminated per `(α, ω)` and the two nonlinear parameters
//! are refined by Levenberg-Marquardt on the projected residual.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{ExpError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedFit {
    pub omega: f64,
    pub alpha: f64,
    pub offset: f64,
    /// `√(a² + b²)` at `t₀`.
    pub amplitude: f64,
    /// One-sigma parameter uncertainties from the residual variance.
    pub omega_sd: f64,
    pub alpha_sd: f64,
    /// RMS residual over RMS of the detrended data.
    pub rel_residual: f64,
}

impl DampedFit {
    pub fn frequency(&self) -> f64 {
        self.omega / (2.0 * PI)
    }
}

/// Outcome of fitting a trace that may not oscillate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitOutcome {
    Oscillation(DampedFit),
    /// Fewer than two full oscillations or peak-to-peak below the threshold.
    NoOscillation { peak_to_peak: f64 },
}

/// Fits above this relative residual are failures.
pub const MAX_REL_RESIDUAL: f64 = 0.05;

struct Projection {
    residual: DVector<f64>,
    coef: DVector<f64>,
}

fn project(t: &[f64], y: &DVector<f64>, alpha: f64, omega: f64) -> Option<Projection> {
    let n = t.len();
    let mut a = DMatrix::<f64>::zeros(n, 3);
    for (i, &ti) in t.iter().enumerate() {
        let e = (-alpha * ti).exp();
        a[(i, 0)] = 1.0;
        a[(i, 1)] = e * (omega * ti).cos();
        a[(i, 2)] = e * (omega * ti).sin();
    }
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(y, 1e-12).ok()?;
    let residual = y - &a * &coef;
    residual.iter().all(|v| v.is_finite()).then_some(Projection { residual, coef })
}

/// Fit `y(t)`; `threshold` is the peak-to-peak below which the trace counts as flat.
pub fn fit_damped_sinusoid(t: &[f64], y: &[f64], threshold: f64) -> Result<FitOutcome> {
    let n = t.len();
    if n != y.len() || n < 16 {
        return Err(ExpError::Config("fit needs at least 16 matching samples".into()));
    }
    let t0 = t[0];
    let tau: Vec<f64> = t.iter().map(|v| v - t0).collect();
    let duration = tau[n - 1];
    // Remove a straight line before judging whether there is any oscillation.
    let (tm, ym) = (tau.iter().sum::<f64>() / n as f64, y.iter().sum::<f64>() / n as f64);
    let sxy: f64 = tau.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = tau.iter().map(|a| (a - tm) * (a - tm)).sum();
    let slope = sxy / sxx;
    let detrended: Vec<f64> = tau.iter().zip(y).map(|(a, b)| b - ym - slope * (a - tm)).collect();
    let (lo, hi) = detrended.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let crossings = detrended.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
    if hi - lo < threshold || crossings < 4 {
        return Ok(FitOutcome::NoOscillation { peak_to_peak: hi - lo });
    }
    let omega_guess = PI * crossings as f64 / duration;
    let half = n / 2;
    let rms = |s: &[f64]| (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt();
    let (r1, r2) = (rms(&detrended[..half]), rms(&detrended[half..]));
    let alpha_guess = if r1 > 0.0 && r2 > 0.0 { (r1 / r2).ln() / (tau[half] - tau[0]).max(f64::MIN_POSITIVE) } else { 0.0 };
    let yv = DVector::from_column_slice(y);
    let cost = |p: &Vector2<f64>| project(&tau, &yv, p[0], p[1]).map(|pr| pr.residual.norm_squared());
    let mut p = Vector2::new(alpha_guess, omega_guess);
    let mut c = cost(&p).ok_or(ExpError::Fit { residual: f64::NAN })?;
    let mut lambda = 1e-3;
    let mut jacobian = DMatrix::<f64>::zeros(n, 2);
    for _ in 0..200 {
        let base = project(&tau, &yv, p[0], p[1]).ok_or(ExpError::Fit { residual: f64::NAN })?;
        let steps = [1e-6 * p[0].abs().max(1e-3 / duration), 1e-7 * p[1].abs()];
        for k in 0..2 {
            let mut hi_p = p;
            let mut lo_p = p;
            hi_p[k] += steps[k];
            lo_p[k] -= steps[k];
            let rh = project(&tau, &yv, hi_p[0], hi_p[1]).ok_or(ExpError::Fit { residual: f64::NAN })?;
            let rl = project(&tau, &yv, lo_p[0], lo_p[1]).ok_or(ExpError::Fit { residual: f64::NAN })?;
            jacobian.set_column(k, &((rh.residual - rl.residual) / (2.0 * steps[k])));
        }
        let jtj: Matrix2<f64> = (jacobian.transpose() * &jacobian).fixed_view::<2, 2>(0, 0).into_owned();
        let jtr: Vector2<f64> = (jacobian.transpose() * &base.residual).fixed_view::<2, 1>(0, 0).into_owned();
        let mut improved = false;
        for _ in 0..30 {
            let damped = jtj + Matrix2::from_diagonal(&jtj.diagonal()) * lambda;
            let Some(delta) = damped.lu().solve(&(-jtr)) else { break };
            let trial = p + delta;
            if let Some(ct) = cost(&trial) {
                if ct <= c {
                    let converged = (c - ct) <= 1e-14 * c || delta.component_div(&p.map(|v| v.abs().max(1.0))).norm() < 1e-13;
                    p = trial;
                    c = ct;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if converged {
                        return finish(&tau, &yv, p, &jacobian, &detrended);
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    finish(&tau, &yv, p, &jacobian, &detrended)
}

fn finish(tau: &[f64], y: &DVector<f64>, p: Vector2<f64>, jacobian: &DMatrix<f64>, detrended: &[f64]) -> Result<FitOutcome> {
    let n = tau.len();
    let pr = project(tau, y, p[0], p[1]).ok_or(ExpError::Fit { residual: f64::NAN })?;
    let ssr = pr.residual.norm_squared();
    let scale = (detrended.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let rel_residual = (ssr / n as f64).sqrt() / scale;
    if !(rel_residual <= MAX_REL_RESIDUAL) || !(p[1] > 0.0) {
        return Err(ExpError::Fit { residual: rel_residual });
    }
    let sigma2 = ssr / (n - 5) as f64;
    let jtj: Matrix2<f64> = (jacobian.transpose() * jacobian).fixed_view::<2, 2>(0, 0).into_owned();
    let cov = jtj.try_inverse().map(|m| m * sigma2).unwrap_or(Matrix2::from_element(f64::INFINITY));
    Ok(FitOutcome::Oscillation(DampedFit {
        alpha: p[0],
        omega: p[1],
        offset: pr.coef[0],
        amplitude: pr.coef[1].hypot(pr.coef[2]),
        alpha_sd: cov[(0, 0)].abs().sqrt(),
        omega_sd: cov[(1, 1)].abs().sqrt(),
        rel_residual,
    }))
}
