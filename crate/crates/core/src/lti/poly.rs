//! Real polynomials in the Laplace (or z) variable, stored with descending powers.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// Coefficients below this fraction of the largest magnitude are dropped after arithmetic.
pub const TRIM_RELATIVE: f64 = 1e-12;

/// `coeffs[0]` multiplies the highest power. The zero polynomial is `[0.0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Self {
        let mut p = Self {
            coeffs: coeffs.into(),
        };
        p.trim();
        p
    }

    /// Builds without trimming; used where stored constants must be kept verbatim.
    pub fn from_raw(coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            Self::zero()
        } else {
            Self { coeffs }
        }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `a·s + b`
    pub fn linear(a: f64, b: f64) -> Self {
        Self::new(vec![a, b])
    }

    /// Monic polynomial with the given roots (complex roots must come in conjugate pairs).
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
            for (i, c) in acc.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c * r;
            }
            acc = next;
        }
        Self::new(acc.into_iter().map(|c| c.re).collect::<Vec<_>>())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient of `s^k`.
    pub fn coeff_of_power(&self, k: usize) -> f64 {
        let n = self.degree();
        if k > n {
            0.0
        } else {
            self.coeffs[n - k]
        }
    }

    fn trim(&mut self) {
        let max = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if max == 0.0 || !max.is_finite() {
            if max == 0.0 {
                self.coeffs = vec![0.0];
            }
            return;
        }
        let tol = TRIM_RELATIVE * max;
        for c in self.coeffs.iter_mut() {
            if c.abs() < tol {
                *c = 0.0;
            }
        }
        let first = self.coeffs.iter().position(|&c| c != 0.0).unwrap_or(0);
        self.coeffs.drain(..first);
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect::<Vec<_>>())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Self {
        let n = self.degree();
        if n == 0 {
            return Self::zero();
        }
        Self::new(
            self.coeffs[..n]
                .iter()
                .enumerate()
                .map(|(i, c)| c * (n - i) as f64)
                .collect::<Vec<_>>(),
        )
    }

    pub fn powi(&self, k: u32) -> Self {
        (0..k).fold(Self::constant(1.0), |acc, _| &acc * self)
    }

    /// Quotient and remainder of polynomial long division.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        if self.degree() < divisor.degree() {
            return (Self::zero(), self.clone());
        }
        let mut rem = self.coeffs.clone();
        let dn = divisor.degree();
        let qlen = self.degree() - dn + 1;
        let mut q = vec![0.0; qlen];
        for i in 0..qlen {
            let factor = rem[i] / divisor.coeffs[0];
            q[i] = factor;
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[i + j] -= factor * d;
            }
        }
        let r = rem[qlen..].to_vec();
        (Self::new(q), Self::new(if r.is_empty() { vec![0.0] } else { r }))
    }

    /// Roots from the eigenvalues of the companion matrix.
    pub fn roots(&self) -> Vec<Complex64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.coeffs[0];
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            companion[(0, j)] = -self.coeffs[j + 1] / lead;
        }
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        let mut roots: Vec<Complex64> = companion.complex_eigenvalues().iter().copied().collect();
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        roots
    }

    /// True when every root lies strictly in the open left half-plane.
    pub fn is_hurwitz(&self) -> bool {
        self.roots().iter().all(|r| r.re < 0.0)
    }

    /// Approximate equality relative to the larger coefficient magnitude.
    pub fn approx_eq(&self, other: &Self, rel: f64) -> bool {
        if self.degree() != other.degree() {
            return false;
        }
        let scale = self
            .coeffs
            .iter()
            .chain(other.coeffs.iter())
            .fold(0.0_f64, |m, c| m.max(c.abs()))
            .max(f64::MIN_POSITIVE);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .all(|(a, b)| (a - b).abs() <= rel * scale)
    }
}

impl<'a> Add<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = vec![0.0; n];
        for (i, c) in self.coeffs.iter().rev().enumerate() {
            out[n - 1 - i] += c;
        }
        for (i, c) in rhs.coeffs.iter().rev().enumerate() {
            out[n - 1 - i] += c;
        }
        Polynomial::new(out)
    }
}

impl<'a> Sub<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl<'a> Mul<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial::from_raw(self.coeffs.iter().map(|c| -c).collect())
    }
}
