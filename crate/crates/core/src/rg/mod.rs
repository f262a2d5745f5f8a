//! Reference governors: scalar κ-update, cross-section interval governor, the
//! OER constraint rows and the three-stage cascade.

mod cascade;
mod prediction;

pub use cascade::{CascadeGovernor, CascadeStep, ChannelDiagnostics, LoadGovernor, LoadStep, StageKind};
pub use prediction::{PredictionModel, FLOW_SCALE, PRESSURE_SCALE, STATE_SCALE};

use crate::lti::LtiError;
use crate::mas::{ConstraintSet, MasError, MasPolytope, DEFAULT_EPS};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RgError {
    #[error(transparent)]
    Mas(#[from] MasError),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("invalid governor configuration: {0}")]
    Config(String),
    #[error("prediction model: {0}")]
    Model(String),
}

/// Stage names for the cascade, in execution order.
pub const CASCADE_ORDER: [&str; 3] = ["flow", "pressure", "current"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernorConfig {
    pub lambda_min: f64,
    pub eps: f64,
    /// Fixed horizon; `None` selects it by redundancy detection.
    #[serde(default)]
    pub jstar: Option<usize>,
    /// Allowed flow-reference deviation as a fraction of the desired value.
    pub overshoot: f64,
    pub ordering: Vec<String>,
    /// Cross-section tolerance relative to the largest governed coefficient.
    #[serde(default = "default_cs_tol")]
    pub cs_tol_rel: f64,
}

fn default_cs_tol() -> f64 {
    1e-9
}

impl Default for GovernorConfig {
    fn default() -> Self {
        Self {
            lambda_min: 1.8,
            eps: DEFAULT_EPS,
            jstar: None,
            overshoot: 0.10,
            ordering: CASCADE_ORDER.iter().map(|s| s.to_string()).collect(),
            cs_tol_rel: default_cs_tol(),
        }
    }
}

impl GovernorConfig {
    pub fn validate(&self) -> Result<(), RgError> {
        if !(self.lambda_min > 1.0) {
            return Err(RgError::Config(format!("lambda_min must exceed 1, got {}", self.lambda_min)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(RgError::Config(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.jstar == Some(0) {
            return Err(RgError::Config("jstar must be at least 1".into()));
        }
        if !(self.overshoot >= 0.0) {
            return Err(RgError::Config("overshoot must be non-negative".into()));
        }
        if self.ordering.iter().map(String::as_str).ne(CASCADE_ORDER) {
            return Err(RgError::Config(format!(
                "ordering must be {CASCADE_ORDER:?} (ascending priority), got {:?}",
                self.ordering
            )));
        }
        if !(self.cs_tol_rel > 0.0) {
            return Err(RgError::Config("cs_tol_rel must be positive".into()));
        }
        Ok(())
    }
}

/// `λ_min·W_rct − W_in ≤ 0` in deviation form: `S = [−1, λ_min]`, `s = y₁* − λ_min·y₂*`.
pub fn oer_constraint_rows(lambda_min: f64, nominal: [f64; 2]) -> Result<ConstraintSet, RgError> {
    if !(lambda_min > 1.0) {
        return Err(RgError::Config(format!("lambda_min must exceed 1, got {lambda_min}")));
    }
    Ok(ConstraintSet::new(
        DMatrix::from_row_slice(1, 2, &[-1.0, lambda_min]),
        DVector::from_element(1, nominal[0] - lambda_min * nominal[1]),
    )?)
}

/// Result of one κ update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaStep {
    pub kappa: f64,
    pub v: f64,
    /// Row that limited κ below one.
    pub binding_row: Option<usize>,
    /// The held reference was already outside the set; κ forced to zero.
    pub infeasible: bool,
    /// Worst row slack at the chosen reference.
    pub margin: f64,
}

/// Largest `κ ∈ [0, 1]` keeping `(x, v_prev + κ(r − v_prev), w)` in the set.
pub fn kappa_step(mas: &MasPolytope, x: &DVector<f64>, v_prev: f64, r: f64, w: &[f64]) -> KappaStep {
    let u = mas.input_vector(v_prev, w);
    let slack = mas.slack(x, &u);
    let hv = mas.hv();
    let dv = r - v_prev;
    let worst = slack.min();
    if worst < 0.0 {
        return KappaStep {
            kappa: 0.0,
            v: v_prev,
            binding_row: Some(slack.imin()),
            infeasible: true,
            margin: worst,
        };
    }
    let mut kappa = 1.0;
    let mut binding = None;
    for i in 0..slack.len() {
        let d = hv[i] * dv;
        if d > 0.0 {
            let k = slack[i] / d;
            if k < kappa {
                kappa = k;
                binding = Some(i);
            }
        }
    }
    let kappa = kappa.clamp(0.0, 1.0);
    let v = if kappa == 1.0 { r } else { v_prev + kappa * dv };
    let margin = (&slack - &hv * (v - v_prev)).min();
    KappaStep {
        kappa,
        v,
        binding_row: binding,
        infeasible: false,
        margin,
    }
}

/// Largest κ in [0, 1] whose point on the segment from `v_prev` to `r` lies in the set.
///
/// Used by the cascade when an upstream stage moved the feedthroughs so that the held
/// reference is no longer admissible. Every row is affine in κ, so the admissible
/// part of the segment is an interval; `None` when it is empty.
pub fn kappa_recover(mas: &MasPolytope, x: &DVector<f64>, v_prev: f64, r: f64, w: &[f64]) -> Option<KappaStep> {
    let slack = mas.slack(x, &mas.input_vector(v_prev, w));
    let hv = mas.hv();
    let dv = r - v_prev;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut binding = None;
    for i in 0..slack.len() {
        // slack[i] - hv[i]*dv*κ >= 0
        let d = hv[i] * dv;
        if d > 0.0 {
            let k = slack[i] / d;
            if k < hi {
                hi = k;
                binding = Some(i);
            }
        } else if d < 0.0 {
            lo = lo.max(slack[i] / d);
        } else if slack[i] < 0.0 {
            return None;
        }
    }
    if lo > hi || hi < 0.0 {
        return None;
    }
    let kappa = hi.clamp(0.0, 1.0);
    let v = if kappa == 1.0 { r } else { v_prev + kappa * dv };
    let margin = (&slack - &hv * (v - v_prev)).min();
    Some(KappaStep {
        kappa,
        v,
        binding_row: if kappa < 1.0 { binding } else { None },
        infeasible: true,
        margin,
    })
}

/// Admissible interval of the governed reference on the set's cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsBounds {
    /// `-∞` when unbounded below.
    pub lo: f64,
    /// `+∞` when unbounded above.
    pub hi: f64,
}

impl CsBounds {
    pub fn is_feasible(&self) -> bool {
        self.lo <= self.hi
    }

    pub fn lo_finite(&self) -> bool {
        self.lo.is_finite()
    }

    pub fn hi_finite(&self) -> bool {
        self.hi.is_finite()
    }
}

/// Interval from rows whose governed coefficient exceeds `tol` in magnitude.
pub fn cs_bounds(mas: &MasPolytope, x: &DVector<f64>, w: &[f64], tol: f64) -> CsBounds {
    let (hv, rhs) = mas.cross_section(x, w);
    let mut b = CsBounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    for i in 0..hv.len() {
        if hv[i] >= tol {
            b.hi = b.hi.min(rhs[i] / hv[i]);
        } else if hv[i] <= -tol {
            b.lo = b.lo.max(rhs[i] / hv[i]);
        }
    }
    b
}

/// Scale-relative tolerance `rel·max|H_v|`.
pub fn cs_tolerance(mas: &MasPolytope, rel: f64) -> f64 {
    rel * mas.hv().amax()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsStep {
    pub v: f64,
    /// The cross-section interval was empty or did not meet the overshoot band.
    pub conflict: bool,
}

/// Clamp `r` into the interval, then into the optional band `cap`; the band wins conflicts.
pub fn cs_rg_step(bounds: CsBounds, r: f64, cap: Option<(f64, f64)>) -> CsStep {
    let mut conflict = !bounds.is_feasible();
    let mut v = if conflict { r } else { r.clamp(bounds.lo, bounds.hi) };
    if let Some((lo, hi)) = cap {
        let capped = v.clamp(lo, hi);
        if capped != v {
            conflict = true;
            v = capped;
        }
    }
    CsStep { v, conflict }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::StateSpaceModel;
    use crate::mas::{build_mas, build_mas_feedthrough};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oer_rows_margin_at_nominal_point() {
        let y2 = 6.0;
        let c = oer_constraint_rows(1.8, [2.0 * y2, y2]).unwrap();
        assert!((c.s[0] - 0.2 * y2).abs() < 1e-12);
        assert!((c.margin(&DVector::zeros(2)) - 0.2 * y2).abs() < 1e-12);
        // λ exactly 1.8 in absolute terms is the boundary
        let y = DVector::from_vec(vec![1.8 * 7.0 - 2.0 * y2, 7.0 - y2]);
        assert!(c.margin(&y).abs() < 1e-12);
        assert!(oer_constraint_rows(1.0, [1.0, 1.0]).is_err());
    }

    #[test]
    fn one_sided_and_box_bounds() {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        // static model y = v, constraints v ≤ 2 and −v ≤ 1
        let model = StateSpaceModel::new(m(0.0), m(0.0), m(0.0), m(1.0), 0.02).unwrap();
        let up = ConstraintSet::new(m(1.0), DVector::from_element(1, 2.0)).unwrap();
        let mas = build_mas(&model, &up, 0.01, 1).unwrap();
        let b = cs_bounds(&mas, &DVector::zeros(1), &[], 1e-12);
        assert!((b.hi - 1.98).abs() < 1e-12 && b.lo == f64::NEG_INFINITY);
        let both = ConstraintSet::new(DMatrix::from_column_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![2.0, 1.0])).unwrap();
        let mas = build_mas(&model, &both, 0.01, 1).unwrap();
        let b = cs_bounds(&mas, &DVector::zeros(1), &[], 1e-12);
        assert!((b.lo + 0.99).abs() < 1e-12 && (b.hi - 1.98).abs() < 1e-12);
    }

    #[test]
    fn cs_step_clamps_and_cap_wins() {
        let b = CsBounds { lo: 1.0, hi: 5.0 };
        assert_eq!(cs_rg_step(b, 3.0, Some((2.7, 3.3))).v, 3.0);
        assert_eq!(cs_rg_step(b, 0.95, Some((0.855, 1.045))).v, 1.0);
        let b = CsBounds { lo: 1.2, hi: 5.0 };
        let s = cs_rg_step(b, 1.0, Some((0.9, 1.1)));
        assert_eq!(s.v, 1.1);
        assert!(s.conflict);
    }

    fn random_mas(seed: u64) -> (MasPolytope, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = crate::mas::tests::random_stable(&mut rng, 3, 2, 2);
        let c = ConstraintSet::new(
            DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0)),
            DVector::from_fn(3, |_, _| rng.random_range(0.5..2.0)),
        )
        .unwrap();
        (build_mas_feedthrough(&model, 0, &c, 0.01, 30).unwrap(), rng)
    }

    #[test]
    fn kappa_matches_bisection_and_is_maximal() {
        for seed in 0..20 {
            let (mas, mut rng) = random_mas(seed);
            let mut tested = 0;
            while tested < 20 {
                let x = DVector::from_fn(3, |_, _| rng.random_range(-0.5..0.5));
                let w = [rng.random_range(-0.3..0.3)];
                let v_prev = rng.random_range(-0.3..0.3);
                if !mas.contains(&x, v_prev, &w).0 {
                    continue;
                }
                tested += 1;
                let r = rng.random_range(-5.0..5.0);
                let k = kappa_step(&mas, &x, v_prev, r, &w);
                assert!(!k.infeasible && k.margin >= -1e-12);
                let inside = |kap: f64| mas.contains(&x, v_prev + kap * (r - v_prev), &w).0;
                let (mut lo, mut hi) = (0.0, 1.0);
                if inside(1.0) {
                    lo = 1.0;
                } else {
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if inside(mid) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                }
                assert!((k.kappa - lo).abs() < 1e-9, "closed form {} bisection {}", k.kappa, lo);
                if k.kappa < 1.0 {
                    assert!(!inside(k.kappa + 1e-6));
                }
            }
        }
    }

    #[test]
    fn kappa_fixed_point_and_infeasible_hold() {
        let (mas, _) = random_mas(1);
        let x = DVector::zeros(3);
        let k = kappa_step(&mas, &x, 0.1, 0.1, &[0.0]);
        assert_eq!(k.v, 0.1);
        let far = DVector::from_element(3, 1e3);
        let k = kappa_step(&mas, &far, 0.1, 0.5, &[0.0]);
        assert!(k.infeasible && k.kappa == 0.0 && k.v == 0.1);
    }

    #[test]
    fn recovery_finds_furthest_admissible_point() {
        let mut checked = 0;
        for seed in 0..20 {
            let (mas, mut rng) = random_mas(seed);
            for _ in 0..60 {
                let x = DVector::from_fn(3, |_, _| rng.random_range(-0.5..0.5));
                let w = [rng.random_range(-0.3..0.3)];
                let (v_prev, r) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
                if mas.contains(&x, v_prev, &w).0 {
                    continue;
                }
                let inside = |kap: f64| mas.contains(&x, v_prev + kap * (r - v_prev), &w).0;
                let n = 2_000;
                let scan = (0..=n).rev().map(|i| i as f64 / n as f64).find(|&k| inside(k));
                match (kappa_recover(&mas, &x, v_prev, r, &w), scan) {
                    (Some(k), Some(s)) => {
                        assert!(k.infeasible && k.margin >= -1e-9);
                        assert!(k.kappa >= s - 1e-12 && k.kappa - s <= 1.0 / n as f64 + 1e-12);
                        checked += 1;
                    }
                    (None, None) => {}
                    (got, want) => panic!("recovery {got:?} vs scan {want:?}"),
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn cs_interval_matches_grid_scan() {
        for seed in 0..100 {
            let (mas, mut rng) = random_mas(100 + seed);
            let x = DVector::from_fn(3, |_, _| rng.random_range(-0.5..0.5));
            let w = [rng.random_range(-0.3..0.3)];
            let b = cs_bounds(&mas, &x, &w, cs_tolerance(&mas, 1e-9));
            let step = 1e-3;
            let grid: Vec<f64> = (0..=20_000).map(|i| -10.0 + i as f64 * step).collect();
            let inside: Vec<f64> = grid.iter().copied().filter(|&v| mas.contains(&x, v, &w).0).collect();
            if inside.is_empty() {
                assert!(!b.is_feasible() || b.hi - b.lo < step);
                continue;
            }
            let (glo, ghi) = (inside[0], *inside.last().unwrap());
            if glo > -10.0 {
                assert!((glo - b.lo).abs() <= step);
            }
            if ghi < 10.0 {
                assert!((ghi - b.hi).abs() <= step);
            }
            let mid = 0.5 * (glo + ghi);
            assert_eq!(cs_rg_step(b, mid, None).v, mid);
        }
    }

    #[test]
    fn config_validation() {
        GovernorConfig::default().validate().unwrap();
        let bad = GovernorConfig {
            ordering: vec!["current".into(), "pressure".into(), "flow".into()],
            ..GovernorConfig::default()
        };
        assert!(bad.validate().is_err());
        let text = serde_json::to_string(&GovernorConfig::default()).unwrap();
        let back: GovernorConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, GovernorConfig::default());
    }
}
