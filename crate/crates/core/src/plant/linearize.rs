use super::equilibrium::equilibrium;
use super::model::{compressor_flow, derivatives_unchecked, oer_outputs};
use super::{PlantError, PlantInputs, PlantParams, PlantState};
use crate::lti::StateSpaceModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Output order of the linearized model.
pub const LINEAR_OUTPUTS: [&str; 4] = ["W_cp", "p_sm", "W_O2_in", "W_O2_rct"];

/// Continuous linearization with the equilibrium it was taken about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub model: StateSpaceModel,
    pub state: PlantState,
    pub inputs: PlantInputs,
    /// Output values at the equilibrium, same order as [`LINEAR_OUTPUTS`].
    pub outputs: [f64; 4],
}

/// Central-difference Jacobian of `f` at `x0` with per-coordinate steps `h`.
pub fn central_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x0: &DVector<f64>, h: &[f64]) -> DMatrix<f64> {
    let m = f(x0).len();
    let mut jac = DMatrix::zeros(m, x0.len());
    for k in 0..x0.len() {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[k] += h[k];
        xm[k] -= h[k];
        jac.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h[k])));
    }
    jac
}

pub(crate) fn state_of(v: &DVector<f64>) -> PlantState {
    PlantState {
        p_ca: v[0],
        omega_cp: v[1],
        p_sm: v[2],
    }
}

pub(crate) fn inputs_of(v: &DVector<f64>) -> PlantInputs {
    PlantInputs {
        v_cm: v[0],
        u_om: v[1],
        i_st: v[2],
    }
}

pub(crate) fn linear_outputs(x: &PlantState, u: &PlantInputs, p: &PlantParams) -> DVector<f64> {
    let o = oer_outputs(x, u, p);
    DVector::from_vec(vec![
        compressor_flow(x.omega_cp, x.p_sm, p).flow,
        x.p_sm,
        o.w_o2_in,
        o.w_o2_rct,
    ])
}

/// Linearization about an already-known equilibrium.
pub fn linearize_at(p: &PlantParams, x0: PlantState, u0: PlantInputs) -> Linearization {
    let xv = DVector::from_row_slice(&x0.to_array());
    let uv = DVector::from_vec(vec![u0.v_cm, u0.u_om, u0.i_st]);
    let hx: Vec<f64> = xv.iter().map(|v| 1e-6 * v.abs()).collect();
    let hu = [1e-4 * u0.v_cm.abs().max(1.0), 1e-5, 1e-4 * u0.i_st.abs().max(1.0)];
    let fx = |x: &DVector<f64>| DVector::from_row_slice(&derivatives_unchecked(&state_of(x), &u0, p));
    let fu = |u: &DVector<f64>| DVector::from_row_slice(&derivatives_unchecked(&x0, &inputs_of(u), p));
    let gx = |x: &DVector<f64>| linear_outputs(&state_of(x), &u0, p);
    let gu = |u: &DVector<f64>| linear_outputs(&x0, &inputs_of(u), p);
    let a = central_jacobian(fx, &xv, &hx);
    let b = central_jacobian(fu, &uv, &hu);
    let c = central_jacobian(gx, &xv, &hx);
    let d = central_jacobian(gu, &uv, &hu);
    let y = linear_outputs(&x0, &u0, p);
    Linearization {
        model: StateSpaceModel::new(a, b, c, d, 0.0).expect("consistent jacobian shapes"),
        state: x0,
        inputs: u0,
        outputs: [y[0], y[1], y[2], y[3]],
    }
}

/// Solves for the equilibrium at `op` and linearizes there.
pub fn linearize(p: &PlantParams, op: PlantInputs) -> Result<Linearization, PlantError> {
    let x0 = equilibrium(p, &op, None)?;
    let lin = linearize_at(p, x0, op);
    if !lin.model.is_stable() {
        return Err(PlantError::UnstableLinearization);
    }
    Ok(lin)
}

impl Linearization {
    /// The two-by-two channel from (v_cm, u_om) to (W_cp in g/s, p_sm in bar).
    pub fn design_channels(&self) -> StateSpaceModel {
        let m = &self.model;
        let out_scale = DMatrix::from_diagonal(&DVector::from_vec(vec![1e3, 1e-5]));
        StateSpaceModel::new(
            m.a.clone(),
            m.b.columns(0, 2).into_owned(),
            &out_scale * m.c.rows(0, 2),
            &out_scale * m.d.view((0, 0), (2, 2)),
            0.0,
        )
        .expect("sub-model dimensions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op() -> PlantInputs {
        PlantInputs::new(180.0, 0.45, 190.0)
    }

    #[test]
    fn published_point_is_stable_with_eq5_signs() {
        let lin = linearize(&PlantParams::default(), op()).unwrap();
        assert!(lin.model.eigenvalues().iter().all(|e| e.re < 0.0));
        let g = lin.design_channels().dc_gain().unwrap();
        assert!(g[(0, 0)] > 0.0 && g[(0, 1)] > 0.0 && g[(1, 0)] > 0.0 && g[(1, 1)] < 0.0);
    }

    #[test]
    fn jacobian_predicts_small_perturbations() {
        let p = PlantParams::default();
        let lin = linearize(&p, op()).unwrap();
        let x0 = lin.state;
        let u0 = lin.inputs;
        let base = derivatives_unchecked(&x0, &u0, &p);
        let mut prev_err = f64::INFINITY;
        for scale in [1e-3, 5e-4] {
            let dx = DVector::from_vec(vec![x0.p_ca * scale, x0.omega_cp * scale, x0.p_sm * scale]);
            let x = PlantState {
                p_ca: x0.p_ca + dx[0],
                omega_cp: x0.omega_cp + dx[1],
                p_sm: x0.p_sm + dx[2],
            };
            let f = derivatives_unchecked(&x, &u0, &p);
            let pred = &lin.model.a * &dx;
            let err: f64 = (0..3).map(|k| (f[k] - base[k] - pred[k]).powi(2)).sum::<f64>().sqrt();
            // second-order remainder shrinks by about four when the step halves
            assert!(err < prev_err / 3.0);
            prev_err = err;
        }
    }

    #[test]
    fn richardson_refined_jacobian_agrees() {
        let p = PlantParams::default();
        let lin = linearize(&p, op()).unwrap();
        let x0 = lin.state;
        let u0 = lin.inputs;
        let xv = DVector::from_row_slice(&x0.to_array());
        let f = |x: &DVector<f64>| DVector::from_row_slice(&derivatives_unchecked(&state_of(x), &u0, &p));
        let h: Vec<f64> = xv.iter().map(|v| 1e-4 * v).collect();
        let h2: Vec<f64> = h.iter().map(|v| v / 2.0).collect();
        let j1 = central_jacobian(f, &xv, &h);
        let j2 = central_jacobian(f, &xv, &h2);
        let rich = (&j2 * 4.0 - j1) / 3.0;
        for k in 0..3 {
            let col_scale = rich.column(k).norm();
            let diff = (rich.column(k) - lin.model.a.column(k)).norm();
            assert!(diff <= 1e-6 * col_scale, "column {k}: {diff} vs {col_scale}");
        }
    }
}
