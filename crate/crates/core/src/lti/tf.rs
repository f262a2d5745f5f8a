//! Rational transfer functions and transfer matrices.

use super::poly::Polynomial;
use super::LtiError;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Relative root distance under which a numerator and denominator root cancel.
const CANCEL_TOL: f64 = 1e-7;

/// `num(s) / den(s)` with a monic denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialRatio {
    num: Polynomial,
    den: Polynomial,
}

impl PolynomialRatio {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, LtiError> {
        if den.is_zero() {
            return Err(LtiError::ZeroDenominator);
        }
        let lead = den.leading();
        let (num, den) = if lead == 1.0 {
            (num, den)
        } else {
            (num.scale(1.0 / lead), den.scale(1.0 / lead))
        };
        Ok(Self { num, den })
    }

    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self, LtiError> {
        Self::new(Polynomial::new(num.to_vec()), Polynomial::new(den.to_vec()))
    }

    pub fn constant(k: f64) -> Self {
        Self {
            num: Polynomial::constant(k),
            den: Polynomial::constant(1.0),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `k / (tau·s + 1)^n`
    pub fn lag(k: f64, tau: f64, n: u32) -> Self {
        let den = Polynomial::linear(tau, 1.0).powi(n);
        Self::new(Polynomial::constant(k), den).expect("lag denominator is nonzero")
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_proper(&self) -> bool {
        self.is_zero() || self.num.degree() <= self.den.degree()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.is_zero() || self.num.degree() < self.den.degree()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        if self.is_zero() {
            Vec::new()
        } else {
            self.num.roots()
        }
    }

    /// Evaluates at a complex point; fails when `s` sits on a pole.
    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        let d = self.den.eval_complex(s);
        let scale: f64 = self
            .den
            .coeffs()
            .iter()
            .rev()
            .enumerate()
            .map(|(k, c)| c.abs() * s.norm().powi(k as i32))
            .sum();
        if d.norm() <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return Err(LtiError::PoleAtFrequency {
                row: 0,
                col: 0,
                omega: s.im,
            });
        }
        Ok(self.num.eval_complex(s) / d)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self::new(&self.num * &rhs.num, &self.den * &rhs.den).expect("product of nonzero dens")
    }

    pub fn add(&self, rhs: &Self) -> Self {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        if self.den.approx_eq(&rhs.den, 1e-14) {
            return Self::new(&self.num + &rhs.num, self.den.clone()).expect("nonzero den");
        }
        let num = &(&self.num * &rhs.den) + &(&rhs.num * &self.den);
        Self::new(num, &self.den * &rhs.den).expect("nonzero den")
    }

    pub fn neg(&self) -> Self {
        Self {
            num: -&self.num,
            den: self.den.clone(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            num: self.num.scale(k),
            den: self.den.clone(),
        }
    }

    /// Reciprocal; fails on a zero numerator.
    pub fn recip(&self) -> Result<Self, LtiError> {
        if self.num.is_zero() {
            return Err(LtiError::StructuralSingularity);
        }
        Self::new(self.den.clone(), self.num.clone())
    }

    /// Removes numerator/denominator root pairs that coincide to within a relative tolerance.
    pub fn simplify(&self) -> Self {
        if self.num.is_zero() {
            return Self::constant(0.0);
        }
        let mut zeros = self.num.roots();
        let mut poles = self.den.roots();
        let mut changed = false;
        let mut i = 0;
        while i < zeros.len() {
            let z = zeros[i];
            let hit = poles
                .iter()
                .position(|p| (p - z).norm() <= CANCEL_TOL * (1.0 + z.norm()));
            if let Some(j) = hit {
                zeros.remove(i);
                poles.remove(j);
                changed = true;
            } else {
                i += 1;
            }
        }
        if !changed {
            return self.clone();
        }
        let num = Polynomial::from_roots(&zeros).scale(self.num.leading());
        let den = Polynomial::from_roots(&poles);
        Self::new(num, den).expect("monic den")
    }
}

/// Grid of rational functions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<PolynomialRatio>,
}

impl TransferMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<PolynomialRatio>) -> Result<Self, LtiError> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(LtiError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} transfer matrix",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: Vec<Vec<PolynomialRatio>>) -> Result<Self, LtiError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LtiError::DimensionMismatch("ragged transfer matrix rows".into()));
        }
        Self::new(r, c, rows.into_iter().flatten().collect())
    }

    pub fn scalar(g: PolynomialRatio) -> Self {
        Self {
            rows: 1,
            cols: 1,
            entries: vec![g],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::static_gain(&DMatrix::identity(n, n))
    }

    pub fn static_gain(k: &DMatrix<f64>) -> Self {
        let mut entries = Vec::with_capacity(k.len());
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                entries.push(PolynomialRatio::constant(k[(i, j)]));
            }
        }
        Self {
            rows: k.nrows(),
            cols: k.ncols(),
            entries,
        }
    }

    /// Diagonal matrix from scalar entries.
    pub fn diagonal(diag: Vec<PolynomialRatio>) -> Self {
        let n = diag.len();
        let mut entries = vec![PolynomialRatio::zero(); n * n];
        for (i, g) in diag.into_iter().enumerate() {
            entries[i * n + i] = g;
        }
        Self {
            rows: n,
            cols: n,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &PolynomialRatio {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[PolynomialRatio] {
        &self.entries
    }

    pub fn map(&self, f: impl Fn(&PolynomialRatio) -> PolynomialRatio) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    /// Sub-matrix of a single entry, as a 1x1 transfer matrix.
    pub fn channel(&self, i: usize, j: usize) -> Self {
        Self::scalar(self.entry(i, j).clone())
    }

    pub fn is_proper(&self) -> bool {
        self.entries.iter().all(PolynomialRatio::is_proper)
    }

    /// First improper entry, if any.
    pub fn improper_entry(&self) -> Option<(usize, usize)> {
        self.entries
            .iter()
            .position(|g| !g.is_proper())
            .map(|k| (k / self.cols, k % self.cols))
    }

    pub fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        let mut m = DMatrix::<Complex64>::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.entry(i, j).eval(s).map_err(|_| LtiError::PoleAtFrequency {
                    row: i,
                    col: j,
                    omega: s.im,
                })?;
            }
        }
        Ok(m)
    }

    /// Entrywise evaluation at `s = jω`.
    pub fn freq_response(&self, omega: f64) -> Result<DMatrix<Complex64>, LtiError> {
        if !(omega >= 0.0) {
            return Err(LtiError::InvalidFrequency(omega));
        }
        self.eval(Complex64::new(0.0, omega))
    }

    pub fn dc_gain(&self) -> Result<DMatrix<f64>, LtiError> {
        let m = self.freq_response(0.0)?;
        Ok(m.map(|c| c.re))
    }

    /// Matrix product `self · rhs`.
    pub fn mul(&self, rhs: &Self) -> Result<Self, LtiError> {
        if self.cols != rhs.rows {
            return Err(LtiError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.rows * rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = PolynomialRatio::zero();
                for k in 0..self.cols {
                    let term = self.entry(i, k).mul(rhs.entry(k, j));
                    if !term.is_zero() {
                        acc = acc.add(&term);
                    }
                }
                entries.push(acc);
            }
        }
        Self::new(self.rows, rhs.cols, entries)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, LtiError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(LtiError::DimensionMismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| a.add(b))
            .collect();
        Self::new(self.rows, self.cols, entries)
    }

    pub fn neg(&self) -> Self {
        self.map(PolynomialRatio::neg)
    }

    pub fn simplify(&self) -> Self {
        self.map(PolynomialRatio::simplify)
    }

    /// Determinant of a 2x2 matrix as a single rational function.
    pub fn det_2x2(&self) -> Result<PolynomialRatio, LtiError> {
        if self.rows != 2 || self.cols != 2 {
            return Err(LtiError::DimensionMismatch(format!(
                "determinant needs 2x2, got {}x{}",
                self.rows, self.cols
            )));
        }
        let (a, b, c, d) = (self.entry(0, 0), self.entry(0, 1), self.entry(1, 0), self.entry(1, 1));
        if let Some(den) = self.common_denominator() {
            // (n00 n11 - n01 n10) / den^2
            let num = &(a.num() * d.num()) - &(b.num() * c.num());
            return PolynomialRatio::new(num, den * den);
        }
        Ok(a.mul(d).add(&b.mul(c).neg()))
    }

    /// The shared denominator when every entry carries the same one.
    fn common_denominator(&self) -> Option<&Polynomial> {
        let first = self.entries[0].den();
        self.entries
            .iter()
            .all(|g| g.den().approx_eq(first, 1e-14))
            .then_some(first)
    }

    /// Inverse of a 2x2 transfer matrix; entries may come out improper.
    pub fn invert_2x2(&self) -> Result<Self, LtiError> {
        let det = self.det_2x2()?;
        if det.is_zero() {
            return Err(LtiError::StructuralSingularity);
        }
        let (a, b, c, d) = (self.entry(0, 0), self.entry(0, 1), self.entry(1, 0), self.entry(1, 1));
        if let Some(den) = self.common_denominator() {
            // adj(N)/den * den^2/detnum = adj(N)·den/detnum
            let det_num = det.num().clone();
            let make = |n: &Polynomial, sign: f64| {
                PolynomialRatio::new((n * den).scale(sign), det_num.clone()).map(|g| g.simplify())
            };
            return Self::new(
                2,
                2,
                vec![make(d.num(), 1.0)?, make(b.num(), -1.0)?, make(c.num(), -1.0)?, make(a.num(), 1.0)?],
            );
        }
        let inv_det = det.recip()?;
        let entries = vec![
            d.mul(&inv_det).simplify(),
            b.neg().mul(&inv_det).simplify(),
            c.neg().mul(&inv_det).simplify(),
            a.mul(&inv_det).simplify(),
        ];
        Self::new(2, 2, entries)
    }
}

/// `sys1` feeding `sys2`, i.e. the product `sys2 · sys1`.
pub fn series(sys1: &TransferMatrix, sys2: &TransferMatrix) -> Result<TransferMatrix, LtiError> {
    sys2.mul(sys1)
}

pub fn parallel(sys1: &TransferMatrix, sys2: &TransferMatrix) -> Result<TransferMatrix, LtiError> {
    sys1.add(sys2)
}

#[derive(Serialize, Deserialize)]
struct TransferMatrixJson {
    num: Vec<Vec<Vec<f64>>>,
    den: Vec<Vec<Vec<f64>>>,
}

impl Serialize for TransferMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let grid = |f: &dyn Fn(&PolynomialRatio) -> Vec<f64>| {
            (0..self.rows)
                .map(|i| (0..self.cols).map(|j| f(self.entry(i, j))).collect())
                .collect()
        };
        TransferMatrixJson {
            num: grid(&|g| g.num().coeffs().to_vec()),
            den: grid(&|g| g.den().coeffs().to_vec()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TransferMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = TransferMatrixJson::deserialize(deserializer)?;
        if raw.num.len() != raw.den.len() {
            return Err(D::Error::custom("num and den grids differ in row count"));
        }
        let mut rows = Vec::new();
        for (nr, dr) in raw.num.into_iter().zip(raw.den) {
            if nr.len() != dr.len() {
                return Err(D::Error::custom("num and den grids differ in column count"));
            }
            let row = nr
                .into_iter()
                .zip(dr)
                .map(|(n, d)| PolynomialRatio::new(Polynomial::from_raw(n), Polynomial::from_raw(d)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(D::Error::custom)?;
            rows.push(row);
        }
        TransferMatrix::from_rows(rows).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lag(a: f64) -> PolynomialRatio {
        PolynomialRatio::from_coeffs(&[1.0], &[1.0, a]).unwrap()
    }

    #[test]
    fn denominator_is_normalized() {
        let g = PolynomialRatio::from_coeffs(&[4.0], &[2.0, 2.0]).unwrap();
        assert_eq!(g.den().coeffs(), &[1.0, 1.0]);
        assert_eq!(g.num().coeffs(), &[2.0]);
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!(matches!(
            PolynomialRatio::from_coeffs(&[1.0], &[0.0]),
            Err(LtiError::ZeroDenominator)
        ));
    }

    #[test]
    fn diagonal_inverse() {
        let g = TransferMatrix::diagonal(vec![lag(1.0), lag(2.0)]);
        let inv = g.invert_2x2().unwrap();
        assert!(inv.entry(0, 0).num().approx_eq(&Polynomial::new(vec![1.0, 1.0]), 1e-9));
        assert!(inv.entry(1, 1).num().approx_eq(&Polynomial::new(vec![1.0, 2.0]), 1e-9));
        assert_eq!(inv.entry(0, 0).den().degree(), 0);
        assert!(inv.entry(0, 1).is_zero());
    }

    #[test]
    fn rank_one_matrix_is_singular() {
        let g = TransferMatrix::from_rows(vec![vec![lag(1.0), lag(2.0)], vec![lag(1.0), lag(2.0)]]).unwrap();
        assert!(matches!(g.invert_2x2(), Err(LtiError::StructuralSingularity)));
    }

    #[test]
    fn series_of_two_lags_at_unit_frequency() {
        let a = TransferMatrix::scalar(lag(1.0));
        let b = TransferMatrix::scalar(lag(2.0));
        let s = series(&a, &b).unwrap();
        let got = s.freq_response(1.0).unwrap()[(0, 0)];
        let j = Complex64::new(0.0, 1.0);
        let expect = 1.0 / ((j + 1.0) * (j + 2.0));
        assert_relative_eq!(got.re, expect.re, epsilon = 1e-14);
        assert_relative_eq!(got.im, expect.im, epsilon = 1e-14);
    }

    #[test]
    fn parallel_with_negation_vanishes() {
        let g = TransferMatrix::from_rows(vec![vec![lag(1.0), lag(3.0)], vec![lag(0.5), lag(2.0)]]).unwrap();
        let z = parallel(&g, &g.neg()).unwrap();
        for w in [0.0, 0.3, 7.0] {
            assert!(z.freq_response(w).unwrap().norm() < 1e-15);
        }
    }

    #[test]
    fn pole_on_axis_is_reported() {
        let integrator = TransferMatrix::scalar(PolynomialRatio::from_coeffs(&[1.0], &[1.0, 0.0]).unwrap());
        assert!(matches!(
            integrator.dc_gain(),
            Err(LtiError::PoleAtFrequency { row: 0, col: 0, .. })
        ));
    }

    #[test]
    fn json_field_names() {
        let g = TransferMatrix::scalar(lag(1.0));
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"num":[[[1.0]]],"den":[[[1.0,1.0]]]}"#);
        let back: TransferMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn simplify_cancels_shared_root() {
        let num = &Polynomial::new(vec![1.0, 2.0]) * &Polynomial::new(vec![1.0, 5.0]);
        let den = &Polynomial::new(vec![1.0, 2.0]) * &Polynomial::new(vec![1.0, 1.0, 1.0]);
        let g = PolynomialRatio::new(num, den).unwrap().simplify();
        assert_eq!(g.num().degree(), 1);
        assert_eq!(g.den().degree(), 2);
    }
}
