//! Reduced-order cathode airpath plant and its output maps.

pub mod calibrate;
mod design;
mod equilibrium;
mod linearize;
mod model;
mod params;

pub use design::{design_plant, DESIGN_DEN, DESIGN_NUM_11, DESIGN_NUM_12, DESIGN_NUM_21, DESIGN_NUM_22};
pub use equilibrium::{equilibrium, rk4_step, steady_state_for_setpoints, SteadyPoint};
pub use linearize::{central_jacobian, linearize, linearize_at, Linearization, LINEAR_OUTPUTS};
pub use model::{
    compressor_flow, derivatives, motor_current, net_power_and_efficiency, oer_outputs, outputs, stack_voltage,
    CompressorFlow, OerOutputs, PlantInputs, PlantOutputs, PlantState, MAP_MAX_RATIO, MAP_OMEGA_RANGE, OMEGA_FLOOR,
};
pub use params::{AirpathPhysics, PlantParams, SurrogateConstants};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("compressor speed {0} rad/s is at or below the singular floor")]
    SingularCompressorSpeed(f64),
    #[error("no equilibrium found (scaled residual {residual:.3e})")]
    NoEquilibrium { residual: f64 },
    #[error("linearization is not stable")]
    UnstableLinearization,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("non-physical state: {0}")]
    NonPhysical(String),
    #[error("infeasible operating point: {0}")]
    Infeasible(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}
