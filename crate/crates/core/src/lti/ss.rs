use super::poly::Polynomial;
use super::tf::{PolynomialRatio, TransferMatrix};
use super::LtiError;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// `x' = A x + B u`, `y = C x + D u`. `ts == 0` marks a continuous model.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub ts: f64,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        ts: f64,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        let bad = a.ncols() != n
            || b.nrows() != n
            || c.ncols() != n
            || d.nrows() != c.nrows()
            || d.ncols() != b.ncols();
        if bad {
            return Err(LtiError::DimensionMismatch(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if !(ts >= 0.0) || !ts.is_finite() {
            return Err(LtiError::InvalidSampleTime(ts));
        }
        Ok(Self { a, b, c, d, ts })
    }

    /// Memoryless model `y = D u`.
    pub fn static_gain(d: DMatrix<f64>, ts: f64) -> Self {
        let (p, m) = d.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
            ts,
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_discrete(&self) -> bool {
        self.ts > 0.0
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        if self.order() == 0 {
            return Vec::new();
        }
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m, e| m.max(e.norm()))
    }

    /// Continuous: every eigenvalue in the open left half-plane. Discrete: inside the unit circle.
    pub fn is_stable(&self) -> bool {
        if self.is_discrete() {
            self.spectral_radius() < 1.0
        } else {
            self.eigenvalues().iter().all(|e| e.re < 0.0)
        }
    }

    /// `C (pI − A)⁻¹ B + D` at a complex point `p` (s or z).
    pub fn eval(&self, p: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        let n = self.order();
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(d);
        }
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { p } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m.lu().solve(&b).ok_or(LtiError::SingularResolvent)?;
        let c = self.c.map(|v| Complex64::new(v, 0.0));
        Ok(c * x + d)
    }

    /// Response at `s = jω`, or at `z = e^{jωT}` for discrete models.
    pub fn freq_response(&self, omega: f64) -> Result<DMatrix<Complex64>, LtiError> {
        if !(omega >= 0.0) {
            return Err(LtiError::InvalidFrequency(omega));
        }
        let p = if self.is_discrete() {
            Complex64::from_polar(1.0, omega * self.ts)
        } else {
            Complex64::new(0.0, omega)
        };
        self.eval(p)
    }

    pub fn dc_gain(&self) -> Result<DMatrix<f64>, LtiError> {
        let n = self.order();
        if n == 0 {
            return Ok(self.d.clone());
        }
        let m = if self.is_discrete() {
            DMatrix::identity(n, n) - &self.a
        } else {
            -&self.a
        };
        let x = m.lu().solve(&self.b).ok_or(LtiError::SingularResolvent)?;
        Ok(&self.c * x + &self.d)
    }

    /// Zero-order-hold equivalent via the exponential of `[[A, B], [0, 0]]·T`.
    pub fn discretize(&self, ts: f64) -> Result<Self, LtiError> {
        if self.is_discrete() {
            return Err(LtiError::AlreadyDiscrete);
        }
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(LtiError::InvalidSampleTime(ts));
        }
        let (n, m) = (self.order(), self.inputs());
        let mut blk = DMatrix::<f64>::zeros(n + m, n + m);
        blk.view_mut((0, 0), (n, n)).copy_from(&self.a);
        blk.view_mut((0, n), (n, m)).copy_from(&self.b);
        let e = (blk * ts).exp();
        Ok(Self {
            a: e.view((0, 0), (n, n)).into_owned(),
            b: e.view((0, n), (n, m)).into_owned(),
            c: self.c.clone(),
            d: self.d.clone(),
            ts,
        })
    }

    /// One discrete update: returns `(x[k+1], y[k])`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let y = &self.c * x + &self.d * u;
        let xn = &self.a * x + &self.b * u;
        (xn, y)
    }

    /// Closed loop under unit negative feedback `u = r − y`, from `r` to `y`.
    pub fn unity_feedback(&self) -> Result<Self, LtiError> {
        let p = self.outputs();
        if p != self.inputs() {
            return Err(LtiError::DimensionMismatch(format!(
                "feedback needs a square loop, got {}x{}",
                p,
                self.inputs()
            )));
        }
        let k = (DMatrix::identity(p, p) + &self.d)
            .try_inverse()
            .ok_or(LtiError::SingularResolvent)?;
        let a = &self.a - &self.b * &k * &self.c;
        let b = &self.b * &k;
        let c = &k * &self.c;
        let d = &k * &self.d;
        Self::new(a, b, c, d, self.ts)
    }

    /// `self` feeding `next`.
    pub fn series(&self, next: &Self) -> Result<Self, LtiError> {
        if self.outputs() != next.inputs() || self.ts != next.ts {
            return Err(LtiError::DimensionMismatch(format!(
                "cannot cascade {} outputs (ts {}) into {} inputs (ts {})",
                self.outputs(),
                self.ts,
                next.inputs(),
                next.ts
            )));
        }
        let (n1, n2) = (self.order(), next.order());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        let mut b = DMatrix::zeros(n1 + n2, self.inputs());
        b.view_mut((0, 0), (n1, self.inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.inputs())).copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(next.outputs(), n1 + n2);
        c.view_mut((0, 0), (next.outputs(), n1)).copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.outputs(), n2)).copy_from(&next.c);
        Self::new(a, b, c, &next.d * &self.d, self.ts)
    }

    /// Per-column controllable canonical realization of a proper transfer matrix.
    pub fn realize(g: &TransferMatrix) -> Result<Self, LtiError> {
        if let Some((row, col)) = g.improper_entry() {
            return Err(LtiError::Improper { row, col });
        }
        let (p, m) = (g.rows(), g.cols());
        let mut blocks = Vec::with_capacity(m);
        for j in 0..m {
            blocks.push(realize_column(g, j));
        }
        let n: usize = blocks.iter().map(|b| b.a.nrows()).sum();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m);
        let mut c = DMatrix::zeros(p, n);
        let mut d = DMatrix::zeros(p, m);
        let mut off = 0;
        for (j, blk) in blocks.iter().enumerate() {
            let k = blk.a.nrows();
            a.view_mut((off, off), (k, k)).copy_from(&blk.a);
            if k > 0 {
                b[(off, j)] = 1.0;
            }
            c.view_mut((0, off), (p, k)).copy_from(&blk.c);
            d.set_column(j, &blk.d);
            off += k;
        }
        Self::new(a, b, c, d, 0.0)
    }
}

struct ColumnBlock {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DVector<f64>,
}

/// Product of the distinct denominators in a column.
fn column_denominator(g: &TransferMatrix, j: usize) -> Polynomial {
    let mut distinct: Vec<&Polynomial> = Vec::new();
    for i in 0..g.rows() {
        let e = g.entry(i, j);
        if e.is_zero() {
            continue;
        }
        if !distinct.iter().any(|d| d.approx_eq(e.den(), 1e-14)) {
            distinct.push(e.den());
        }
    }
    distinct
        .into_iter()
        .fold(Polynomial::constant(1.0), |acc, d| &acc * d)
}

fn realize_column(g: &TransferMatrix, j: usize) -> ColumnBlock {
    let p = g.rows();
    let den = column_denominator(g, j);
    let n = den.degree();
    let lead = den.leading();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        a[(0, k)] = -den.coeffs()[k + 1] / lead;
    }
    for k in 1..n {
        a[(k, k - 1)] = 1.0;
    }
    let mut c = DMatrix::zeros(p, n);
    let mut d = DVector::zeros(p);
    for i in 0..p {
        let e: &PolynomialRatio = g.entry(i, j);
        if e.is_zero() {
            continue;
        }
        let (cofactor, _) = den.div_rem(e.den());
        let num = (e.num() * &cofactor).scale(1.0 / lead);
        let dd = num.coeff_of_power(n);
        d[i] = dd;
        for k in 0..n {
            // state k carries s^(n-1-k)
            let pw = n - 1 - k;
            c[(i, k)] = num.coeff_of_power(pw) - dd * den.coeff_of_power(pw) / lead;
        }
    }
    ColumnBlock { a, c, d }
}

#[derive(Serialize, Deserialize)]
struct StateSpaceJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
    ts: f64,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Option<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl Serialize for StateSpaceModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        StateSpaceJson {
            a: to_rows(&self.a),
            b: to_rows(&self.b),
            c: to_rows(&self.c),
            d: to_rows(&self.d),
            ts: self.ts,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateSpaceModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = StateSpaceJson::deserialize(deserializer)?;
        let n = raw.a.len();
        let p = raw.d.len();
        let m = raw.d.first().map_or(0, Vec::len);
        let bad = || D::Error::custom("inconsistent state-space dimensions");
        let a = from_rows(&raw.a, n, n).ok_or_else(bad)?;
        let b = from_rows(&raw.b, n, m).ok_or_else(bad)?;
        let c = from_rows(&raw.c, p, n).ok_or_else(bad)?;
        let d = from_rows(&raw.d, p, m).ok_or_else(bad)?;
        StateSpaceModel::new(a, b, c, d, raw.ts).map_err(D::Error::custom)
    }
}
