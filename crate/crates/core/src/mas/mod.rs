//! Finitely determined inner approximations of the maximal admissible set of a
//! stable discrete LTI model under constant inputs.

mod horizon;

pub use horizon::{select_horizon, HorizonReport, OperatingBox, HORIZON_CAP, HORIZON_LOOKAHEAD};

use crate::lti::StateSpaceModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EPS: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasError {
    #[error("unstable prediction model (spectral radius {0:.6})")]
    Unstable(f64),
    #[error("prediction model must be discrete")]
    Continuous,
    #[error("steady-state shrinkage must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("horizon must be at least 1")]
    BadHorizon,
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("constraint row {0} is zero")]
    ZeroRow(usize),
    #[error("linear program failed: {0}")]
    Lp(String),
}

/// Output constraints `S y ≤ s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConstraints", into = "RawConstraints")]
pub struct ConstraintSet {
    pub s_mat: DMatrix<f64>,
    pub s: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    #[serde(rename = "S")]
    s_mat: Vec<Vec<f64>>,
    s: Vec<f64>,
}

impl TryFrom<RawConstraints> for ConstraintSet {
    type Error = MasError;

    fn try_from(r: RawConstraints) -> Result<Self, MasError> {
        let p = r.s_mat.first().map_or(0, Vec::len);
        if r.s_mat.iter().any(|row| row.len() != p) {
            return Err(MasError::Shape("ragged S".into()));
        }
        Self::new(DMatrix::from_fn(r.s_mat.len(), p, |i, j| r.s_mat[i][j]), DVector::from_vec(r.s))
    }
}

impl From<ConstraintSet> for RawConstraints {
    fn from(c: ConstraintSet) -> Self {
        Self {
            s_mat: (0..c.s_mat.nrows()).map(|i| c.s_mat.row(i).iter().copied().collect()).collect(),
            s: c.s.iter().copied().collect(),
        }
    }
}

impl ConstraintSet {
    pub fn new(s_mat: DMatrix<f64>, s: DVector<f64>) -> Result<Self, MasError> {
        if s_mat.nrows() == 0 || s_mat.nrows() != s.len() {
            return Err(MasError::Shape(format!("S is {}x{}, s has {}", s_mat.nrows(), s_mat.ncols(), s.len())));
        }
        if let Some(i) = (0..s_mat.nrows()).find(|&i| s_mat.row(i).iter().all(|&v| v == 0.0)) {
            return Err(MasError::ZeroRow(i));
        }
        Ok(Self { s_mat, s })
    }

    pub fn rows(&self) -> usize {
        self.s.len()
    }

    /// Worst `s − S y`; negative when some constraint is violated.
    pub fn margin(&self, y: &DVector<f64>) -> f64 {
        (&self.s - &self.s_mat * y).min()
    }
}

/// `H_x x + H_u u ≤ h`, where one input column is governed and the rest are feedthroughs.
#[derive(Debug, Clone, PartialEq)]
pub struct MasPolytope {
    pub hx: DMatrix<f64>,
    /// One column per model input, in model order.
    pub hu: DMatrix<f64>,
    pub h: DVector<f64>,
    pub eps: f64,
    pub jstar: usize,
    pub governed: usize,
    /// Constraint rows per block.
    pub q: usize,
}

fn check_model(model: &StateSpaceModel, c: &ConstraintSet, eps: f64, jstar: usize) -> Result<(), MasError> {
    if !model.is_discrete() {
        return Err(MasError::Continuous);
    }
    let rho = model.spectral_radius();
    if !(rho < 1.0) {
        return Err(MasError::Unstable(rho));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(MasError::BadEpsilon(eps));
    }
    if jstar < 1 {
        return Err(MasError::BadHorizon);
    }
    if c.s_mat.ncols() != model.outputs() {
        return Err(MasError::Shape(format!(
            "constraints act on {} outputs, model has {}",
            c.s_mat.ncols(),
            model.outputs()
        )));
    }
    Ok(())
}

/// Steady-state gain `C(I−A)⁻¹B + D`.
pub(crate) fn steady_gain(model: &StateSpaceModel) -> Result<DMatrix<f64>, MasError> {
    let n = model.order();
    let x = (DMatrix::identity(n, n) - &model.a)
        .lu()
        .solve(&model.b)
        .ok_or(MasError::Unstable(1.0))?;
    Ok(&model.c * x + &model.d)
}

/// Row blocks `(S C Aᵏ, S(C Σ_{i<k} Aⁱ B + D))` for `k = 0..=last`.
pub(crate) struct PredictionRows<'a> {
    model: &'a StateSpaceModel,
    sc: DMatrix<f64>,
    s_mat: &'a DMatrix<f64>,
    ak: DMatrix<f64>,
    sum: DMatrix<f64>,
}

impl<'a> PredictionRows<'a> {
    pub(crate) fn new(model: &'a StateSpaceModel, c: &'a ConstraintSet) -> Self {
        let n = model.order();
        Self {
            model,
            sc: &c.s_mat * &model.c,
            s_mat: &c.s_mat,
            ak: DMatrix::identity(n, n),
            sum: DMatrix::zeros(n, model.inputs()),
        }
    }
}

impl Iterator for PredictionRows<'_> {
    type Item = (DMatrix<f64>, DMatrix<f64>);

    fn next(&mut self) -> Option<Self::Item> {
        let hx = &self.sc * &self.ak;
        let hu = &self.sc * &self.sum + self.s_mat * &self.model.d;
        self.sum += &self.ak * &self.model.b;
        self.ak = &self.model.a * &self.ak;
        Some((hx, hu))
    }
}

/// MAS with every input treated as governed column 0 plus feedthroughs.
pub fn build_mas(model: &StateSpaceModel, c: &ConstraintSet, eps: f64, jstar: usize) -> Result<MasPolytope, MasError> {
    build_mas_feedthrough(model, 0, c, eps, jstar)
}

pub fn build_mas_feedthrough(
    model: &StateSpaceModel,
    governed: usize,
    c: &ConstraintSet,
    eps: f64,
    jstar: usize,
) -> Result<MasPolytope, MasError> {
    check_model(model, c, eps, jstar)?;
    let m = model.inputs();
    if governed >= m {
        return Err(MasError::Shape(format!("governed input {governed} of {m}")));
    }
    let (n, q) = (model.order(), c.rows());
    let rows = (jstar + 2) * q;
    let mut hx = DMatrix::zeros(rows, n);
    let mut hu = DMatrix::zeros(rows, m);
    let mut h = DVector::zeros(rows);
    hu.rows_mut(0, q).copy_from(&(&c.s_mat * steady_gain(model)?));
    h.rows_mut(0, q).copy_from(&(&c.s * (1.0 - eps)));
    for (k, (bx, bu)) in PredictionRows::new(model, c).take(jstar + 1).enumerate() {
        let r0 = (k + 1) * q;
        hx.rows_mut(r0, q).copy_from(&bx);
        hu.rows_mut(r0, q).copy_from(&bu);
        h.rows_mut(r0, q).copy_from(&c.s);
    }
    Ok(MasPolytope {
        hx,
        hu,
        h,
        eps,
        jstar,
        governed,
        q,
    })
}

impl MasPolytope {
    pub fn rows(&self) -> usize {
        self.h.len()
    }

    pub fn inputs(&self) -> usize {
        self.hu.ncols()
    }

    pub fn hv(&self) -> DVector<f64> {
        self.hu.column(self.governed).into_owned()
    }

    /// Feedthrough input indices in model order.
    pub fn feedthrough_indices(&self) -> Vec<usize> {
        (0..self.inputs()).filter(|&i| i != self.governed).collect()
    }

    pub fn hw(&self) -> Vec<DVector<f64>> {
        self.feedthrough_indices().into_iter().map(|i| self.hu.column(i).into_owned()).collect()
    }

    /// Same polytope with a different governed column.
    pub fn with_governed(&self, governed: usize) -> Self {
        assert!(governed < self.inputs(), "governed column out of range");
        Self {
            governed,
            ..self.clone()
        }
    }

    /// Assemble the full input vector from the governed value and feedthroughs.
    pub fn input_vector(&self, v: f64, w: &[f64]) -> DVector<f64> {
        assert_eq!(w.len() + 1, self.inputs(), "feedthrough count");
        let mut u = DVector::zeros(self.inputs());
        let mut it = w.iter();
        for i in 0..self.inputs() {
            u[i] = if i == self.governed { v } else { *it.next().unwrap() };
        }
        u
    }

    /// Row slack `h − H_x x − H_u u`.
    pub fn slack(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.h - &self.hx * x - &self.hu * u
    }

    /// Membership and the worst row margin.
    pub fn contains(&self, x: &DVector<f64>, v: f64, w: &[f64]) -> (bool, f64) {
        self.contains_input(x, &self.input_vector(v, w))
    }

    pub fn contains_input(&self, x: &DVector<f64>, u: &DVector<f64>) -> (bool, f64) {
        let margin = self.slack(x, u).min();
        (margin >= 0.0, margin)
    }

    /// Per-row `(H_v, h − H_x x − H_w w)` for the governed column.
    pub fn cross_section(&self, x: &DVector<f64>, w: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let u = self.input_vector(0.0, w);
        (self.hv(), self.slack(x, &u))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>();
        serde_json::json!({
            "Hx": rows(&self.hx),
            "Hv": self.hv().as_slice(),
            "Hw": self.hw().iter().map(|c| c.as_slice().to_vec()).collect::<Vec<_>>(),
            "h": self.h.as_slice(),
            "eps": self.eps,
            "jstar": self.jstar,
            "governed": self.governed,
            "q": self.q,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, MasError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            #[serde(rename = "Hx")]
            hx: Vec<Vec<f64>>,
            #[serde(rename = "Hv")]
            hv: Vec<f64>,
            #[serde(rename = "Hw")]
            hw: Vec<Vec<f64>>,
            h: Vec<f64>,
            eps: f64,
            jstar: usize,
            governed: usize,
            q: usize,
        }
        let raw: Raw = serde_json::from_value(v.clone()).map_err(|e| MasError::Shape(e.to_string()))?;
        let rows = raw.h.len();
        let n = raw.hx.first().map_or(0, Vec::len);
        if raw.hx.len() != rows || raw.hx.iter().any(|r| r.len() != n) || raw.hv.len() != rows || raw.hw.iter().any(|c| c.len() != rows) {
            return Err(MasError::Shape("MAS blocks have unequal row counts".into()));
        }
        let m = raw.hw.len() + 1;
        if raw.governed >= m {
            return Err(MasError::Shape("governed column out of range".into()));
        }
        let mut hu = DMatrix::zeros(rows, m);
        let mut w = raw.hw.iter();
        for j in 0..m {
            let col = if j == raw.governed { &raw.hv } else { w.next().unwrap() };
            hu.set_column(j, &DVector::from_column_slice(col));
        }
        Ok(Self {
            hx: DMatrix::from_fn(rows, n, |i, j| raw.hx[i][j]),
            hu,
            h: DVector::from_vec(raw.h),
            eps: raw.eps,
            jstar: raw.jstar,
            governed: raw.governed,
            q: raw.q,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(a: f64, b: f64) -> StateSpaceModel {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        StateSpaceModel::new(m(a), m(b), m(1.0), m(0.0), 0.02).unwrap()
    }

    fn upper(limit: f64) -> ConstraintSet {
        ConstraintSet::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, limit)).unwrap()
    }

    #[test]
    fn scalar_rows_by_hand() {
        let mas = build_mas(&scalar(0.5, 1.0), &upper(1.0), 0.01, 2).unwrap();
        let hx: Vec<f64> = mas.hx.iter().copied().collect();
        let hv: Vec<f64> = mas.hv().iter().copied().collect();
        assert_eq!(hx, vec![0.0, 1.0, 0.5, 0.25]);
        assert_eq!(hv, vec![2.0, 0.0, 1.0, 1.5]);
        assert_eq!(mas.h.as_slice(), &[0.99, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn steady_state_boundary() {
        let model = scalar(0.5, 1.0);
        let mas = build_mas(&model, &upper(1.0), 0.01, 20).unwrap();
        let v = 0.99 / 2.0;
        let x = DVector::from_element(1, v / 0.5);
        assert!(mas.contains(&x, v, &[]).0);
        assert!(!mas.contains(&x, v * (1.0 + 1e-6), &[]).0);
    }

    #[test]
    fn constructed_violation_margin() {
        let mas = build_mas(&scalar(0.5, 1.0), &upper(1.0), 0.01, 5).unwrap();
        let x = DVector::from_element(1, 0.0);
        let (ok, m) = mas.contains(&x, (0.99 + 1e-3) / 2.0, &[]);
        assert!(!ok && (m + 1e-3).abs() < 1e-12);
    }

    #[test]
    fn unstable_and_bad_arguments_rejected() {
        assert!(matches!(build_mas(&scalar(1.01, 1.0), &upper(1.0), 0.01, 2), Err(MasError::Unstable(_))));
        assert!(matches!(build_mas(&scalar(0.5, 1.0), &upper(1.0), 0.0, 2), Err(MasError::BadEpsilon(_))));
        assert!(matches!(build_mas(&scalar(0.5, 1.0), &upper(1.0), 0.01, 0), Err(MasError::BadHorizon)));
    }

    pub(crate) fn random_stable(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpaceModel {
        loop {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.6..0.6));
            let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
            let d = DMatrix::from_fn(p, m, |_, _| rng.random_range(-0.3..0.3));
            let s = StateSpaceModel::new(a, b, c, d, 0.02).unwrap();
            if s.spectral_radius() < 0.95 {
                return s;
            }
        }
    }

    #[test]
    fn zero_feedthrough_columns_match_plain_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_stable(&mut rng, 3, 1, 2);
        let mut wide = base.clone();
        wide.b = DMatrix::from_fn(3, 2, |i, j| if j == 0 { base.b[(i, 0)] } else { 0.0 });
        wide.d = DMatrix::from_fn(2, 2, |i, j| if j == 0 { base.d[(i, 0)] } else { 0.0 });
        let c = ConstraintSet::new(DMatrix::from_row_slice(1, 2, &[1.0, -0.5]), DVector::from_element(1, 1.0)).unwrap();
        let a = build_mas(&base, &c, 0.01, 15).unwrap();
        let b = build_mas_feedthrough(&wide, 0, &c, 0.01, 15).unwrap();
        assert_eq!(a.hx, b.hx);
        assert_eq!(a.hv(), b.hv());
        assert!(b.hw()[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn swapping_governed_column_swaps_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = random_stable(&mut rng, 2, 2, 1);
        let c = upper(1.0);
        let a = build_mas_feedthrough(&model, 0, &c, 0.01, 10).unwrap();
        let b = build_mas_feedthrough(&model, 1, &c, 0.01, 10).unwrap();
        assert_eq!(a.hv(), b.hw()[0]);
        assert_eq!(a.hw()[0], b.hv());
        assert_eq!(a.with_governed(1), b);
    }

    #[test]
    fn longer_horizon_is_a_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_stable(&mut rng, 3, 1, 2);
        let c = ConstraintSet::new(DMatrix::identity(2, 2), DVector::from_element(2, 1.0)).unwrap();
        let short = build_mas(&model, &c, 0.01, 3).unwrap();
        let long = build_mas(&model, &c, 0.01, 4).unwrap();
        for _ in 0..2000 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let v = rng.random_range(-2.0..2.0);
            if long.contains(&x, v, &[]).0 {
                assert!(short.contains(&x, v, &[]).0);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = random_stable(&mut rng, 2, 3, 1);
        let mas = build_mas_feedthrough(&model, 1, &upper(0.5), 0.02, 4).unwrap();
        let text = serde_json::to_string(&mas.to_json()).unwrap();
        let back = MasPolytope::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, mas);
    }
}
