use super::PlantError;
use serde::{Deserialize, Serialize};
use std::path::Path;

const DEFAULT_JSON: &str = include_str!("../../params/default.json");

/// Coefficients of the reduced airpath model plus the output-map constants.
///
/// Pressures in Pa, flows in kg/s, speeds in rad/s, currents in A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub c9: f64,
    pub c10: f64,
    pub c11: f64,
    pub c12: f64,
    pub c13: f64,
    pub c14: f64,
    pub c15: f64,
    pub c16: f64,
    /// Cathode-inlet orifice constant, kg/(s·Pa).
    pub k_a_ca_in: f64,
    pub n_fc: f64,
    pub x_o2_atm: f64,
    pub omega_atm: f64,
    pub m_o2: f64,
    pub m_h2: f64,
    pub faraday: f64,
    pub t_atm: f64,
    pub p_atm: f64,
    /// Ratio of the fully open ETB area to the unactuated orifice area.
    pub etb_area_scale: f64,
    /// Compressor surrogate map `W = θ1·ω·(1 − θ2·((p/p_atm)^θ3 − 1)/ω²)`.
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// Motor back-EMF constant, V·s/rad.
    pub k_v: f64,
    /// Motor armature resistance, Ω.
    pub r_cm: f64,
    /// Per-cell thermodynamic voltage, V.
    pub e_cell: f64,
    pub act_a: f64,
    pub act_i0: f64,
    pub r_ohm: f64,
    pub pressure_gain: f64,
    pub conc_m: f64,
    pub conc_k: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_JSON).expect("shipped default parameters parse")
    }
}

impl PlantParams {
    pub fn from_json(text: &str) -> Result<Self, PlantError> {
        let p: Self = serde_json::from_str(text).map_err(|e| PlantError::InvalidParams(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, PlantError> {
        let text = std::fs::read_to_string(path).map_err(|e| PlantError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
            ("mu4", self.mu4),
            ("c9", self.c9),
            ("c10", self.c10),
            ("c11", self.c11),
            ("c12", self.c12),
            ("c13", self.c13),
            ("c14", self.c14),
            ("c15", self.c15),
            ("c16", self.c16),
            ("k_a_ca_in", self.k_a_ca_in),
            ("n_fc", self.n_fc),
            ("m_o2", self.m_o2),
            ("m_h2", self.m_h2),
            ("faraday", self.faraday),
            ("t_atm", self.t_atm),
            ("p_atm", self.p_atm),
            ("etb_area_scale", self.etb_area_scale),
            ("theta1", self.theta1),
            ("theta3", self.theta3),
            ("k_v", self.k_v),
            ("r_cm", self.r_cm),
            ("e_cell", self.e_cell),
            ("act_i0", self.act_i0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.x_o2_atm > 0.0 && self.x_o2_atm < 1.0) {
            return Err(PlantError::InvalidParams("x_o2_atm must lie in (0,1)".into()));
        }
        let nonneg = [
            ("omega_atm", self.omega_atm),
            ("theta2", self.theta2),
            ("act_a", self.act_a),
            ("r_ohm", self.r_ohm),
            ("pressure_gain", self.pressure_gain),
            ("conc_m", self.conc_m),
            ("conc_k", self.conc_k),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(PlantError::InvalidParams(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// Reaction oxygen flow per ampere of stack current, kg/(s·A).
    pub fn o2_per_amp(&self) -> f64 {
        self.n_fc * self.m_o2 / (4.0 * self.faraday)
    }

    /// Hydrogen consumption per ampere, kg/(s·A).
    pub fn h2_per_amp(&self) -> f64 {
        self.n_fc * self.m_h2 / (2.0 * self.faraday)
    }

    /// Oxygen mass fraction of the humid inlet air.
    pub fn o2_fraction(&self) -> f64 {
        self.x_o2_atm / (1.0 + self.omega_atm)
    }
}

/// Physical constants from which the lumped coefficients are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirpathPhysics {
    pub gas_constant: f64,
    pub t_stack: f64,
    pub molar_mass_air: f64,
    pub v_cathode: f64,
    pub v_supply: f64,
    pub inertia: f64,
    pub k_t: f64,
    pub k_v: f64,
    pub r_cm: f64,
    pub eta_motor: f64,
    pub eta_compressor: f64,
    pub cp_air: f64,
    pub gamma: f64,
    pub r_air: f64,
    pub k_in: f64,
    /// Effective area of the unactuated outlet orifice, kg/(s·Pa).
    pub k_out: f64,
    pub etb_area_scale: f64,
    pub n_fc: f64,
    pub x_o2_atm: f64,
    pub omega_atm: f64,
    pub m_o2: f64,
    pub m_h2: f64,
    pub faraday: f64,
    pub t_atm: f64,
    pub p_atm: f64,
}

impl Default for AirpathPhysics {
    fn default() -> Self {
        Self {
            gas_constant: 8.314,
            t_stack: 353.0,
            molar_mass_air: 0.02897,
            v_cathode: 0.01,
            v_supply: 0.02,
            inertia: 5e-5,
            k_t: 0.0153,
            k_v: 0.0153,
            r_cm: 0.82,
            eta_motor: 0.98,
            eta_compressor: 0.8,
            cp_air: 1004.0,
            gamma: 1.4,
            r_air: 286.9,
            k_in: 0.3629e-5,
            k_out: 0.2177e-5,
            etb_area_scale: 2.0,
            n_fc: 381.0,
            x_o2_atm: 0.23,
            omega_atm: 0.0131,
            m_o2: 0.032,
            m_h2: 0.002016,
            faraday: 96485.0,
            t_atm: 298.0,
            p_atm: 101325.0,
        }
    }
}

/// Compressor map and polarization constants that are not physical lumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConstants {
    pub theta: [f64; 3],
    pub e_cell: f64,
    pub act_a: f64,
    pub act_i0: f64,
    pub r_ohm: f64,
    pub pressure_gain: f64,
    pub conc_m: f64,
    pub conc_k: f64,
}

impl Default for SurrogateConstants {
    fn default() -> Self {
        Self {
            theta: [5e-5, 3.5e7, 1.2],
            e_cell: 1.229,
            act_a: 0.05,
            act_i0: 1.0,
            r_ohm: 1.5e-3,
            pressure_gain: 0.0,
            conc_m: 2e-3,
            conc_k: 4.0,
        }
    }
}

impl AirpathPhysics {
    pub fn derive(&self, s: &SurrogateConstants) -> PlantParams {
        let g = self.gas_constant * self.t_stack / (self.molar_mass_air * self.v_cathode);
        let k_om = self.k_out * self.etb_area_scale;
        let mu2 = g * self.k_in;
        let c13 = self.eta_motor * self.k_t / (self.inertia * self.r_cm);
        PlantParams {
            mu1: mu2 + g * k_om,
            mu2,
            mu3: g * k_om * self.p_atm,
            mu4: g * self.n_fc * self.m_o2 / (4.0 * self.faraday),
            c9: c13 * self.k_v,
            c10: self.cp_air * self.t_atm / (self.inertia * self.eta_compressor),
            c11: self.p_atm,
            c12: (self.gamma - 1.0) / self.gamma,
            c13,
            c14: self.gamma * self.r_air * self.t_atm / self.v_supply,
            c15: 1.0 / self.eta_compressor,
            c16: self.k_in,
            k_a_ca_in: self.k_in,
            n_fc: self.n_fc,
            x_o2_atm: self.x_o2_atm,
            omega_atm: self.omega_atm,
            m_o2: self.m_o2,
            m_h2: self.m_h2,
            faraday: self.faraday,
            t_atm: self.t_atm,
            p_atm: self.p_atm,
            etb_area_scale: self.etb_area_scale,
            theta1: s.theta[0],
            theta2: s.theta[1],
            theta3: s.theta[2],
            k_v: self.k_v,
            r_cm: self.r_cm,
            e_cell: s.e_cell,
            act_a: s.act_a,
            act_i0: s.act_i0,
            r_ohm: s.r_ohm,
            pressure_gain: s.pressure_gain,
            conc_m: s.conc_m,
            conc_k: s.conc_k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_file_is_valid() {
        let p = PlantParams::default();
        p.validate().unwrap();
        assert_eq!(p.n_fc, 381.0);
        assert_eq!(p.etb_area_scale, 2.0);
    }

    #[test]
    fn unknown_field_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_JSON).unwrap();
        v["bogus"] = 1.0.into();
        assert!(PlantParams::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn negative_constant_rejected() {
        let mut p = PlantParams::default();
        p.mu4 = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn derived_lumps_match_hand_values() {
        let p = AirpathPhysics::default().derive(&SurrogateConstants::default());
        assert!((p.mu2 - 36.764).abs() < 1e-3);
        assert!((p.c13 - 365.707).abs() < 1e-3);
        assert!((p.c12 - 2.0 / 7.0).abs() < 1e-15);
    }
}
