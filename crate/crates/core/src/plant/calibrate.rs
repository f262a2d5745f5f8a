//! Least-squares fit of the compressor map and ETB area to the design plant.

use super::design::design_plant;
use super::linearize::linearize;
use super::model::compressor_flow;
use super::params::{AirpathPhysics, SurrogateConstants};
use super::{PlantError, PlantInputs, PlantParams};
use crate::setpoints::flow_gain;
use nalgebra::{DMatrix, DVector};

/// Residual weight on the operating-point flow relative to the DC-gain terms.
const FLOW_WEIGHT: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub params: PlantParams,
    /// Entrywise ratio of the fitted DC gain to the design-plant DC gain.
    pub dc_ratio: DMatrix<f64>,
    /// Compressor flow at the operating equilibrium, kg/s.
    pub flow: f64,
    /// Flow demanded by the feed-forward map at the operating current, kg/s.
    pub flow_target: f64,
    pub iterations: usize,
}

/// Fit target: design-plant DC gain and the feed-forward flow at `op`.
pub struct CalibrationProblem {
    pub physics: AirpathPhysics,
    pub surrogate: SurrogateConstants,
    pub op: PlantInputs,
}

impl Default for CalibrationProblem {
    fn default() -> Self {
        Self {
            physics: AirpathPhysics::default(),
            surrogate: SurrogateConstants::default(),
            op: PlantInputs::new(180.0, 0.45, 190.0),
        }
    }
}

impl CalibrationProblem {
    /// Parameters for `z = ln(θ1, θ2, θ3, ETB max area)`.
    fn params_at(&self, z: &DVector<f64>) -> PlantParams {
        let mut phys = self.physics.clone();
        phys.k_out = z[3].exp() / phys.etb_area_scale;
        let mut s = self.surrogate;
        s.theta = [z[0].exp(), z[1].exp(), z[2].exp()];
        phys.derive(&s)
    }

    fn evaluate(&self, p: &PlantParams) -> Result<(DMatrix<f64>, f64), PlantError> {
        let lin = linearize(p, self.op)?;
        let g = lin.design_channels().dc_gain().map_err(|e| PlantError::NonPhysical(e.to_string()))?;
        let w = compressor_flow(lin.state.omega_cp, lin.state.p_sm, p).flow;
        Ok((g, w))
    }

    fn residual(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        let p = self.params_at(z);
        let (g, w) = self.evaluate(&p).ok()?;
        let g5 = design_plant().dc_gain().expect("design plant has no pole at 0");
        let mut r = Vec::with_capacity(5);
        for i in 0..2 {
            for j in 0..2 {
                let ratio = g[(i, j)] / g5[(i, j)];
                if ratio <= 0.0 {
                    return None;
                }
                r.push(ratio.ln());
            }
        }
        let target = flow_gain(&p) * self.op.i_st;
        r.push(FLOW_WEIGHT * (w / target).ln());
        Some(DVector::from_vec(r))
    }

    /// Levenberg–Marquardt from `start = (θ1, θ2, θ3, ETB max area)`.
    pub fn solve(&self, start: [f64; 4]) -> Result<CalibrationReport, PlantError> {
        let mut z = DVector::from_iterator(4, start.iter().map(|v| v.ln()));
        let mut r = self
            .residual(&z)
            .ok_or_else(|| PlantError::Calibration("starting point has no valid equilibrium".into()))?;
        let mut lambda = 1e-2;
        let mut iterations = 0;
        for it in 0..200 {
            iterations = it + 1;
            let mut jac = DMatrix::zeros(r.len(), 4);
            for k in 0..4 {
                let mut zp = z.clone();
                zp[k] += 1e-5;
                let rp = self
                    .residual(&zp)
                    .ok_or_else(|| PlantError::Calibration("jacobian probe left the valid region".into()))?;
                jac.set_column(k, &((rp - &r) / 1e-5));
            }
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &r;
            let mut accepted = false;
            while lambda < 1e10 {
                let damped = &jtj + DMatrix::from_diagonal(&jtj.diagonal()) * lambda;
                let Some(step) = damped.lu().solve(&(-&jtr)) else {
                    lambda *= 10.0;
                    continue;
                };
                let cand = &z + &step;
                if let Some(rc) = self.residual(&cand) {
                    if rc.norm_squared() < r.norm_squared() {
                        let gain = r.norm_squared() - rc.norm_squared();
                        z = cand;
                        r = rc;
                        lambda = (lambda / 3.0).max(1e-12);
                        accepted = true;
                        if gain < 1e-14 {
                            lambda = 1e10;
                        }
                        break;
                    }
                }
                lambda *= 10.0;
            }
            if !accepted || lambda >= 1e10 {
                break;
            }
        }
        let params = self.params_at(&z);
        let (g, w) = self.evaluate(&params)?;
        let g5 = design_plant().dc_gain().expect("design plant has no pole at 0");
        Ok(CalibrationReport {
            dc_ratio: g.component_div(&g5),
            flow: w,
            flow_target: flow_gain(&params) * self.op.i_st,
            params,
            iterations,
        })
    }
}
