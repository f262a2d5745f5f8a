use super::model::{compressor_flow, derivatives, derivatives_unchecked, OMEGA_FLOOR};
use super::{PlantError, PlantInputs, PlantParams, PlantState};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

const STATE_SCALE: [f64; 3] = [1e5, 1e4, 1e5];

fn residual_scale(p: &PlantParams) -> [f64; 3] {
    [p.mu2 * p.p_atm, p.c13 * 100.0, p.c14 * 0.01]
}

/// Classical fourth-order Runge–Kutta step with inputs held constant.
pub fn rk4_step(x: &PlantState, u: &PlantInputs, p: &PlantParams, dt: f64) -> Result<PlantState, PlantError> {
    let add = |x: &PlantState, k: &[f64; 3], h: f64| PlantState {
        p_ca: x.p_ca + h * k[0],
        omega_cp: x.omega_cp + h * k[1],
        p_sm: x.p_sm + h * k[2],
    };
    let k1 = derivatives(x, u, p)?;
    let k2 = derivatives(&add(x, &k1, dt / 2.0), u, p)?;
    let k3 = derivatives(&add(x, &k2, dt / 2.0), u, p)?;
    let k4 = derivatives(&add(x, &k3, dt), u, p)?;
    let mut out = *x;
    out.p_ca += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    out.omega_cp += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    out.p_sm += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
    if !out.is_valid() || out.omega_cp <= OMEGA_FLOOR {
        return Err(PlantError::NonPhysical(format!("integration left the valid region: {out:?}")));
    }
    Ok(out)
}

fn scaled_residual(z: &Vector3<f64>, u: &PlantInputs, p: &PlantParams) -> Option<Vector3<f64>> {
    let x = PlantState {
        p_ca: z[0] * STATE_SCALE[0],
        omega_cp: z[1] * STATE_SCALE[1],
        p_sm: z[2] * STATE_SCALE[2],
    };
    if !x.is_valid() || x.omega_cp <= OMEGA_FLOOR {
        return None;
    }
    let f = derivatives_unchecked(&x, u, p);
    let s = residual_scale(p);
    Some(Vector3::new(f[0] / s[0], f[1] / s[1], f[2] / s[2]))
}

fn newton(z0: Vector3<f64>, u: &PlantInputs, p: &PlantParams) -> (Vector3<f64>, f64) {
    let mut z = z0;
    let Some(mut r) = scaled_residual(&z, u, p) else {
        return (z, f64::INFINITY);
    };
    for _ in 0..100 {
        if r.norm() < 1e-15 {
            break;
        }
        let mut jac = Matrix3::zeros();
        let mut ok = true;
        for k in 0..3 {
            let h = 1e-7 * z[k].abs().max(1e-3);
            let mut zp = z;
            let mut zm = z;
            zp[k] += h;
            zm[k] -= h;
            match (scaled_residual(&zp, u, p), scaled_residual(&zm, u, p)) {
                (Some(a), Some(b)) => jac.set_column(k, &((a - b) / (2.0 * h))),
                _ => ok = false,
            }
        }
        let Some(step) = ok.then(|| jac.lu().solve(&(-r))).flatten() else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-6 {
            let cand = z + step * t;
            if let Some(rc) = scaled_residual(&cand, u, p) {
                if rc.norm() < r.norm() {
                    z = cand;
                    r = rc;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (z, r.norm())
}

/// Root of the state equations at constant inputs.
///
/// Newton from `guess` (or a mid-load default); if that stalls, the plant is
/// integrated for a few seconds and Newton is retried from there.
pub fn equilibrium(p: &PlantParams, u: &PlantInputs, guess: Option<PlantState>) -> Result<PlantState, PlantError> {
    let g = guess.unwrap_or(PlantState {
        p_ca: 2.5e5,
        omega_cp: 9000.0,
        p_sm: 2.65e5,
    });
    let to_z = |x: &PlantState| Vector3::new(x.p_ca / STATE_SCALE[0], x.omega_cp / STATE_SCALE[1], x.p_sm / STATE_SCALE[2]);
    let from_z = |z: &Vector3<f64>| PlantState {
        p_ca: z[0] * STATE_SCALE[0],
        omega_cp: z[1] * STATE_SCALE[1],
        p_sm: z[2] * STATE_SCALE[2],
    };
    let (z, res) = newton(to_z(&g), u, p);
    if res < 1e-11 {
        return Ok(from_z(&z));
    }
    let mut x = g;
    for _ in 0..5000 {
        x = rk4_step(&x, u, p, 1e-3).map_err(|_| PlantError::NoEquilibrium { residual: res })?;
    }
    let (z, res2) = newton(to_z(&x), u, p);
    if res2 < 1e-11 {
        Ok(from_z(&z))
    } else {
        Err(PlantError::NoEquilibrium { residual: res.min(res2) })
    }
}

/// Steady operating point that realizes given flow and pressure at a stack current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyPoint {
    pub state: PlantState,
    pub inputs: PlantInputs,
}

/// Closed-form steady state with `W_cp = w_cp` and `p_sm = p_sm` at current `i_st`.
///
/// Fails when the demanded point needs an ETB opening outside [0, 1] or a
/// cathode pressure below ambient.
pub fn steady_state_for_setpoints(p: &PlantParams, i_st: f64, w_cp: f64, p_sm: f64) -> Result<SteadyPoint, PlantError> {
    let p_ca = p_sm - w_cp / p.c16;
    if !(p_ca > p.p_atm) {
        return Err(PlantError::Infeasible(format!(
            "cathode pressure {p_ca:.0} Pa not above ambient for W={w_cp:.5}, p_sm={p_sm:.0}"
        )));
    }
    let denom = (p.mu2 - p.mu1) * p_ca + p.mu3;
    let u_om = (p.mu4 * i_st - p.mu2 * (p_sm - p_ca)) / denom;
    if !(0.0..=1.0).contains(&u_om) {
        return Err(PlantError::Infeasible(format!("ETB opening {u_om:.4} outside [0,1]")));
    }
    let head = (p_sm / p.p_atm).powf(p.theta3) - 1.0;
    let a = p.theta1;
    let omega = (w_cp + (w_cp * w_cp + 4.0 * a * a * p.theta2 * head).sqrt()) / (2.0 * a);
    let hc = (p_sm / p.c11).powf(p.c12) - 1.0;
    let v_cm = (p.c9 * omega + p.c10 / omega * hc * w_cp) / p.c13;
    let state = PlantState {
        p_ca,
        omega_cp: omega,
        p_sm,
    };
    debug_assert!((compressor_flow(omega, p_sm, p).flow - w_cp).abs() < 1e-9);
    Ok(SteadyPoint {
        state,
        inputs: PlantInputs { v_cm, u_om, i_st },
    })
}
