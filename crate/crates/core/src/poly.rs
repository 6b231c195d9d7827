//! Real polynomials in ascending coefficient order and their complex roots.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Poly {
        let mut p = Poly(coeffs);
        p.trim();
        p
    }

    pub fn zero() -> Poly {
        Poly(Vec::new())
    }

    pub fn constant(c: f64) -> Poly {
        Poly::new(vec![c])
    }

    /// `c·s^k`.
    pub fn monomial(c: f64, k: usize) -> Poly {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        Poly::new(v)
    }

    fn trim(&mut self) {
        while self.0.last() == Some(&0.0) {
            self.0.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree, with the zero polynomial reported as `None`.
    pub fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    pub fn leading(&self) -> f64 {
        self.0.last().copied().unwrap_or(0.0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.0.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn eval_real(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly::new(self.0.iter().map(|c| c * k).collect())
    }

    /// Number of exactly-zero low-order coefficients (the multiplicity of the root at 0).
    pub fn low_zeros(&self) -> usize {
        self.0.iter().take_while(|c| **c == 0.0).count()
    }

    /// Divide by `s^k`; the low `k` coefficients must be exactly zero.
    pub fn shift_down(&self, k: usize) -> Poly {
        debug_assert!(self.low_zeros() >= k || self.is_zero());
        Poly::new(self.0.iter().skip(k).copied().collect())
    }

    /// All complex roots, with those at the origin exact.
    ///
    /// Nonzero roots come from the eigenvalues of the companion matrix of the
    /// polynomial rescaled so its extreme coefficients balance, followed by
    /// Newton polishing on the rescaled polynomial.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let n_total = self
            .degree()
            .ok_or_else(|| Error::Validation("zero polynomial has no roots".into()))?;
        let z = self.low_zeros();
        let mut roots = vec![Complex64::new(0.0, 0.0); z];
        let p = self.shift_down(z);
        let n = n_total - z;
        if n == 0 {
            return Ok(roots);
        }
        let (c0, cn) = (p.coeff(0), p.leading());
        let sigma = (c0 / cn).abs().powf(1.0 / n as f64);
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Conditioning("polynomial coefficients out of range".into()));
        }
        // q(x) = p(σx)/(c_n σ^n), monic.
        let mut q: Vec<f64> = Vec::with_capacity(n + 1);
        let mut pow = 1.0;
        for k in 0..=n {
            q.push(p.coeff(k) * pow);
            pow *= sigma;
        }
        let lead = q[n];
        q.iter_mut().for_each(|c| *c /= lead);
        let q = Poly(q);
        let mut comp = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            comp[(0, k)] = -q.coeff(n - 1 - k);
        }
        for k in 1..n {
            comp[(k, k - 1)] = 1.0;
        }
        let dq = q.derivative();
        for lam in comp.complex_eigenvalues().iter() {
            let mut x = *lam;
            for _ in 0..4 {
                let fx = q.eval(x);
                let dfx = dq.eval(x);
                if dfx.norm() == 0.0 {
                    break;
                }
                let next = x - fx / dfx;
                if q.eval(next).norm() < fx.norm() {
                    x = next;
                } else {
                    break;
                }
            }
            roots.push(x * sigma);
        }
        Ok(roots)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut v = vec![0.0; self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Poly::new(v)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, o: Poly) -> Poly {
        &self + &o
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, o: Poly) -> Poly {
        &self - &o
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, o: Poly) -> Poly {
        &self * &o
    }
}

/// Product of a list of polynomials, `1` when empty.
pub fn product<'a>(items: impl IntoIterator<Item = &'a Poly>) -> Poly {
    items.into_iter().fold(Poly::constant(1.0), |acc, p| &acc * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = Poly::new(vec![1.0, 2.0]);
        let b = Poly::new(vec![-1.0, 0.0, 3.0]);
        assert_eq!((&a * &b).0, vec![-1.0, -2.0, 3.0, 6.0]);
        assert_eq!((&a + &b).0, vec![0.0, 2.0, 3.0]);
        assert_eq!((&a - &a).degree(), None);
        assert_eq!(b.derivative().0, vec![0.0, 6.0]);
    }

    #[test]
    fn roots_of_widely_scaled_polynomial() {
        // (s + 2e3)(s + 1e6 ± j3e8)
        let p = &Poly::new(vec![2e3, 1.0]) * &Poly::new(vec![1e12 + 9e16, 2e6, 1.0]);
        let mut r = p.roots().unwrap();
        r.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        assert!((r[0] - Complex64::new(-2e3, 0.0)).norm() < 1e-9 * 2e3);
        assert!((r[1].re + 1e6).abs() < 1e-6 * 1e6);
        assert!((r[1].im.abs() - 3e8).abs() < 1e-9 * 3e8);
    }

    #[test]
    fn roots_at_origin_are_exact() {
        let p = Poly::new(vec![0.0, 0.0, 3.0, 1.0]);
        let r = p.roots().unwrap();
        assert_eq!(r.iter().filter(|z| z.norm() == 0.0).count(), 2);
        assert!(r.iter().any(|z| (z + 3.0).norm() < 1e-12));
    }
}
