//! Internal model control: `Q = G̃⁻¹F` synthesis, discrete runtime and the power loop.

mod power;
mod runtime;

pub use power::{design_power_imc, design_scalar_imc, identify_first_order, FirstOrderFit, PowerImc};
pub use runtime::{ImcRuntime, ImcStep, InputLimits};

use crate::lti::{LtiError, Polynomial, PolynomialRatio, StateSpaceModel, TransferMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImcError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("invalid IMC configuration: {0}")]
    Config(String),
    #[error("model has right-half-plane transmission zeros {0:?}; factorization with G₊ ≠ I is not supported")]
    NonMinimumPhase(Vec<(f64, f64)>),
    #[error("model is not stable")]
    UnstableModel,
    #[error("controller entry ({row},{col}) is improper; raise the filter order")]
    ImproperController { row: usize, col: usize },
    #[error("identified model is not minimum phase or not stable; re-identify")]
    BadIdentifiedModel,
}

/// Filter time constants and orders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImcConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub n1: u32,
    pub n2: u32,
}

impl Default for ImcConfig {
    fn default() -> Self {
        Self {
            tau1: 0.2,
            tau2: 0.2,
            n1: 1,
            n2: 2,
        }
    }
}

impl ImcConfig {
    pub fn validate(&self) -> Result<(), ImcError> {
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err(ImcError::Config("filter time constants must be positive".into()));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(ImcError::Config("filter orders must be at least 1".into()));
        }
        Ok(())
    }
}

/// `diag(1/(τ1 s+1)^n1, 1/(τ2 s+1)^n2)`.
pub fn design_filter(cfg: &ImcConfig) -> Result<TransferMatrix, ImcError> {
    cfg.validate()?;
    Ok(TransferMatrix::diagonal(vec![
        PolynomialRatio::lag(1.0, cfg.tau1, cfg.n1),
        PolynomialRatio::lag(1.0, cfg.tau2, cfg.n2),
    ]))
}

/// Continuous IMC design: the controller `Q` and internal model `G̃`, both realized.
#[derive(Debug, Clone)]
pub struct ImcDesign {
    pub model: TransferMatrix,
    pub filter: TransferMatrix,
    pub q: TransferMatrix,
    pub q_ss: StateSpaceModel,
    pub model_ss: StateSpaceModel,
}

fn all_stable(g: &TransferMatrix) -> bool {
    g.entries().iter().all(|e| e.is_zero() || e.den().is_hurwitz())
}

/// Right-half-plane (or imaginary-axis) roots of the model determinant numerator.
pub fn rhp_transmission_zeros(g: &TransferMatrix) -> Result<Vec<Complex64>, ImcError> {
    let det = if g.rows() == 1 && g.cols() == 1 {
        g.entry(0, 0).clone()
    } else {
        g.det_2x2()?.simplify()
    };
    if det.is_zero() {
        return Err(LtiError::StructuralSingularity.into());
    }
    Ok(det.zeros().into_iter().filter(|z| z.re >= 0.0).collect())
}

/// `Q = G̃⁻¹F` with proper, stable realizations.
pub fn design_controller(model: &TransferMatrix, filter: &TransferMatrix) -> Result<ImcDesign, ImcError> {
    if !all_stable(model) {
        return Err(ImcError::UnstableModel);
    }
    let rhp = rhp_transmission_zeros(model)?;
    if !rhp.is_empty() {
        return Err(ImcError::NonMinimumPhase(rhp.iter().map(|z| (z.re, z.im)).collect()));
    }
    let inv = model.invert_2x2()?;
    let q = inv.mul(filter)?;
    if let Some((row, col)) = q.improper_entry() {
        return Err(ImcError::ImproperController { row, col });
    }
    let q_ss = StateSpaceModel::realize(&q)?;
    let model_ss = StateSpaceModel::realize(model)?;
    if !q_ss.is_stable() || !model_ss.is_stable() {
        return Err(ImcError::UnstableModel);
    }
    Ok(ImcDesign {
        model: model.clone(),
        filter: filter.clone(),
        q,
        q_ss,
        model_ss,
    })
}

impl ImcDesign {
    /// Nominal complementary sensitivity `G̃(jω)Q(jω)`.
    pub fn nominal_complementary(&self, omega: f64) -> Result<DMatrix<Complex64>, ImcError> {
        Ok(self.model.freq_response(omega)? * self.q.freq_response(omega)?)
    }

    /// ZOH-discretized controller and model.
    pub fn discretize(&self, ts: f64) -> Result<DiscreteImc, ImcError> {
        Ok(DiscreteImc {
            q: self.q_ss.discretize(ts)?,
            model: self.model_ss.discretize(ts)?,
        })
    }
}

/// Sampled IMC pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteImc {
    pub q: StateSpaceModel,
    pub model: StateSpaceModel,
}

impl DiscreteImc {
    /// Equivalent feedback controller from `r − y` to `u`: `Q(I − G̃Q)⁻¹`.
    pub fn feedback_controller(&self) -> Result<StateSpaceModel, ImcError> {
        let (q, g) = (&self.q, &self.model);
        let (nq, ng) = (q.order(), g.order());
        let m = q.inputs();
        // u = Q(e + ỹ), ỹ = G̃u; solve the algebraic loop through D_q D_g
        let k = (DMatrix::identity(m, m) - &q.d * &g.d)
            .try_inverse()
            .ok_or(LtiError::SingularResolvent)?;
        // u = K (Cq xq + Dq Cg xg + Dq e)
        let u_xq = &k * &q.c;
        let u_xg = &k * &q.d * &g.c;
        let u_e = &k * &q.d;
        // w = e + Cg xg + Dg u
        let w_xq = &g.d * &u_xq;
        let w_xg = &g.c + &g.d * &u_xg;
        let w_e = DMatrix::identity(m, m) + &g.d * &u_e;
        let n = nq + ng;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (nq, nq)).copy_from(&(&q.a + &q.b * &w_xq));
        a.view_mut((0, nq), (nq, ng)).copy_from(&(&q.b * &w_xg));
        a.view_mut((nq, 0), (ng, nq)).copy_from(&(&g.b * &u_xq));
        a.view_mut((nq, nq), (ng, ng)).copy_from(&(&g.a + &g.b * &u_xg));
        let mut b = DMatrix::zeros(n, m);
        b.view_mut((0, 0), (nq, m)).copy_from(&(&q.b * &w_e));
        b.view_mut((nq, 0), (ng, m)).copy_from(&(&g.b * &u_e));
        let mut c = DMatrix::zeros(m, n);
        c.view_mut((0, 0), (m, nq)).copy_from(&u_xq);
        c.view_mut((0, nq), (m, ng)).copy_from(&u_xg);
        Ok(StateSpaceModel::new(a, b, c, u_e, q.ts)?)
    }

    /// Loop broken at the plant input, `K·G_p`.
    pub fn input_loop(&self, plant: &StateSpaceModel) -> Result<StateSpaceModel, ImcError> {
        Ok(plant.series(&self.feedback_controller()?)?)
    }
}

/// `1/(τs+1)^k` with the smallest `k` making `num/den · filter` proper.
pub(crate) fn properness_order(ratio: &PolynomialRatio) -> u32 {
    let excess = ratio.num().degree() as i64 - ratio.den().degree() as i64;
    excess.max(0) as u32
}

pub(crate) fn poly_is_min_phase(p: &Polynomial) -> bool {
    p.degree() == 0 || p.is_hurwitz()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::logspace;
    use crate::plant::design_plant;

    #[test]
    fn filter_dc_and_corner() {
        let cfg = ImcConfig::default();
        let f = design_filter(&cfg).unwrap();
        let dc = f.dc_gain().unwrap();
        assert_eq!(dc, DMatrix::identity(2, 2));
        let c = f.freq_response(1.0 / cfg.tau1).unwrap()[(0, 0)].norm();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn second_order_filter_rolls_off_at_forty_db() {
        let f = design_filter(&ImcConfig::default()).unwrap();
        let m = |w: f64| 20.0 * f.freq_response(w).unwrap()[(1, 1)].norm().log10();
        let slope = m(5000.0) - m(500.0);
        assert!((slope + 40.0).abs() < 0.1);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ImcConfig {
            n1: 0,
            ..ImcConfig::default()
        };
        assert!(design_filter(&cfg).is_err());
    }

    #[test]
    fn design_plant_controller_is_proper_and_nominal_loop_is_filter() {
        let f = design_filter(&ImcConfig::default()).unwrap();
        let d = design_controller(&design_plant(), &f).unwrap();
        assert!(d.q.is_proper());
        for w in logspace(1e-2, 1e3, 20) {
            let t = d.nominal_complementary(w).unwrap();
            let fw = f.freq_response(w).unwrap();
            assert!((t - &fw).norm() < 1e-6 * fw.norm().max(1e-3));
        }
    }

    #[test]
    fn first_order_filter_on_second_column_is_improper() {
        let cfg = ImcConfig {
            n2: 1,
            ..ImcConfig::default()
        };
        let f = design_filter(&cfg).unwrap();
        assert!(matches!(
            design_controller(&design_plant(), &f),
            Err(ImcError::ImproperController { .. })
        ));
    }

    #[test]
    fn nonminimum_phase_model_rejected() {
        let e = |n: &[f64], d: &[f64]| PolynomialRatio::from_coeffs(n, d).unwrap();
        let g = TransferMatrix::diagonal(vec![e(&[-1.0, 1.0], &[1.0, 2.0, 1.0]), e(&[1.0], &[1.0, 1.0])]);
        let f = design_filter(&ImcConfig::default()).unwrap();
        assert!(matches!(design_controller(&g, &f), Err(ImcError::NonMinimumPhase(_))));
    }

    #[test]
    fn feedback_controller_matches_frequency_formula() {
        let f = design_filter(&ImcConfig::default()).unwrap();
        let d = design_controller(&design_plant(), &f).unwrap().discretize(0.02).unwrap();
        let k = d.feedback_controller().unwrap();
        for w in [0.3, 3.0, 30.0] {
            let q = d.q.freq_response(w).unwrap();
            let g = d.model.freq_response(w).unwrap();
            let eye = DMatrix::<Complex64>::identity(2, 2);
            let expect = &q * (eye - &g * &q).try_inverse().unwrap();
            let got = k.freq_response(w).unwrap();
            assert!((got - &expect).norm() < 1e-8 * expect.norm());
        }
    }
}
