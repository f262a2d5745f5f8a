use super::{PlantError, PlantParams};
use serde::{Deserialize, Serialize};

/// Below this speed the compressor torque term is singular.
pub const OMEGA_FLOOR: f64 = 1.0;

/// Speed range over which the surrogate map is trusted, rad/s.
pub const MAP_OMEGA_RANGE: (f64, f64) = (500.0, 15_000.0);
/// Largest trusted pressure ratio.
pub const MAP_MAX_RATIO: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub p_ca: f64,
    pub omega_cp: f64,
    pub p_sm: f64,
}

impl PlantState {
    pub fn to_array(self) -> [f64; 3] {
        [self.p_ca, self.omega_cp, self.p_sm]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            p_ca: a[0],
            omega_cp: a[1],
            p_sm: a[2],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantInputs {
    pub v_cm: f64,
    pub u_om: f64,
    pub i_st: f64,
}

impl PlantInputs {
    pub fn new(v_cm: f64, u_om: f64, i_st: f64) -> Self {
        Self { v_cm, u_om, i_st }
    }

    /// ETB opening clamped to [0, 1] and current floored at 0.
    pub fn clamped(self) -> Self {
        Self {
            v_cm: self.v_cm,
            u_om: self.u_om.clamp(0.0, 1.0),
            i_st: self.i_st.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantOutputs {
    pub w_cp: f64,
    pub p_sm: f64,
    pub w_o2_in: f64,
    pub w_o2_rct: f64,
    pub lambda_o2: Option<f64>,
    pub v_st: f64,
    pub p_net: f64,
    pub eta_fcs: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressorFlow {
    pub flow: f64,
    /// Set when the query lies outside the trusted map region or the map clamps to zero.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OerOutputs {
    pub w_o2_in: f64,
    pub w_o2_rct: f64,
    /// `None` at zero stack current.
    pub lambda_o2: Option<f64>,
}

pub fn compressor_flow(omega_cp: f64, p_sm: f64, p: &PlantParams) -> CompressorFlow {
    let head = (p_sm / p.p_atm).powf(p.theta3) - 1.0;
    let raw = p.theta1 * omega_cp * (1.0 - p.theta2 * head / (omega_cp * omega_cp));
    let ratio = p_sm / p.p_atm;
    let outside = omega_cp < MAP_OMEGA_RANGE.0
        || omega_cp > MAP_OMEGA_RANGE.1
        || ratio < 1.0 - 1e-3
        || ratio > MAP_MAX_RATIO;
    CompressorFlow {
        flow: raw.max(0.0),
        extrapolated: outside || raw <= 0.0,
    }
}

/// Isentropic head term `(p_sm/c11)^c12 − 1` used by the torque and manifold equations.
fn thermal_head(p_sm: f64, p: &PlantParams) -> f64 {
    (p_sm / p.c11).powf(p.c12) - 1.0
}

/// `(ṗ_ca, ω̇_cp, ṗ_sm)`.
pub fn derivatives(x: &PlantState, u: &PlantInputs, p: &PlantParams) -> Result<[f64; 3], PlantError> {
    if !(x.omega_cp > OMEGA_FLOOR) {
        return Err(PlantError::SingularCompressorSpeed(x.omega_cp));
    }
    Ok(derivatives_unchecked(x, u, p))
}

pub(crate) fn derivatives_unchecked(x: &PlantState, u: &PlantInputs, p: &PlantParams) -> [f64; 3] {
    let w = compressor_flow(x.omega_cp, x.p_sm, p).flow;
    let h = thermal_head(x.p_sm, p);
    let dp_ca = p.mu2 * x.p_sm - p.mu2 * x.p_ca + (p.mu2 - p.mu1) * x.p_ca * u.u_om + p.mu3 * u.u_om
        - p.mu4 * u.i_st;
    let domega = p.c13 * u.v_cm - p.c9 * x.omega_cp - (p.c10 / x.omega_cp) * h * w;
    let dp_sm = p.c14 * (1.0 + p.c15 * h) * (w - p.c16 * (x.p_sm - x.p_ca));
    [dp_ca, domega, dp_sm]
}

pub fn oer_outputs(x: &PlantState, u: &PlantInputs, p: &PlantParams) -> OerOutputs {
    let w_o2_in = p.k_a_ca_in * p.o2_fraction() * (x.p_sm - x.p_ca);
    let w_o2_rct = p.o2_per_amp() * u.i_st;
    OerOutputs {
        w_o2_in,
        w_o2_rct,
        lambda_o2: (u.i_st > 0.0).then(|| w_o2_in / w_o2_rct),
    }
}

/// Polarization surrogate; clamped to `[0, N·E]`.
pub fn stack_voltage(i_st: f64, p_ca: f64, p: &PlantParams) -> f64 {
    let i = i_st.max(0.0);
    let rel = p.p_atm / p_ca;
    let cell = p.e_cell - p.act_a * (i / p.act_i0 + 1.0).ln() - p.r_ohm * i
        + p.pressure_gain * (p_ca / p.p_atm).ln()
        - p.conc_m * i * rel.powf(p.conc_k);
    (p.n_fc * cell).clamp(0.0, p.n_fc * p.e_cell)
}

/// Compressor motor current from the DC-motor relation.
pub fn motor_current(v_cm: f64, omega_cp: f64, p: &PlantParams) -> f64 {
    (v_cm - p.k_v * omega_cp) / p.r_cm
}

/// `(P_net, η_FCS)`; efficiency is `None` at zero current.
pub fn net_power_and_efficiency(x: &PlantState, u: &PlantInputs, p: &PlantParams) -> (f64, Option<f64>) {
    let v_st = stack_voltage(u.i_st, x.p_ca, p);
    let p_cp = u.v_cm * motor_current(u.v_cm, x.omega_cp, p);
    let p_net = v_st * u.i_st - p_cp;
    let eta = (u.i_st > 0.0).then(|| p_net / (p.n_fc * p.e_cell * u.i_st));
    (p_net, eta)
}

pub fn outputs(x: &PlantState, u: &PlantInputs, p: &PlantParams) -> PlantOutputs {
    let oer = oer_outputs(x, u, p);
    let (p_net, eta_fcs) = net_power_and_efficiency(x, u, p);
    PlantOutputs {
        w_cp: compressor_flow(x.omega_cp, x.p_sm, p).flow,
        p_sm: x.p_sm,
        w_o2_in: oer.w_o2_in,
        w_o2_rct: oer.w_o2_rct,
        lambda_o2: oer.lambda_o2,
        v_st: stack_voltage(u.i_st, x.p_ca, p),
        p_net,
        eta_fcs,
    }
}
