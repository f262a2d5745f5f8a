use super::SimError;
use crate::imc::{design_controller, design_filter, design_scalar_imc, DiscreteImc, FirstOrderFit, ImcConfig};
use crate::plant::{
    design_plant, linearize, linearize_at, net_power_and_efficiency, PlantError, steady_state_for_setpoints, Linearization, PlantInputs,
    PlantParams, SteadyPoint,
};
use crate::rg::{CascadeGovernor, GovernorConfig, LoadGovernor, PredictionModel};
use crate::setpoints::SetpointMap;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorLimits {
    pub v_cm: (f64, f64),
    pub u_om: (f64, f64),
    pub current: (f64, f64),
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            v_cm: (20.0, 300.0),
            u_om: (0.0, 1.0),
            current: (30.0, 250.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Linearization point: compressor voltage [V], throttle [-], stack current [A].
    pub op_point: [f64; 3],
    pub imc: ImcConfig,
    pub governor: GovernorConfig,
    pub limits: ActuatorLimits,
    /// Throttle position of the compressor-only configuration.
    pub siso_throttle: f64,
    /// Power-loop filter time constant, s.
    pub power_tau: f64,
    /// Current about which the power loop model is identified, A.
    pub identification_current: f64,
    /// Net power at 100 % request, W; defaults to the steady net power at the top LUT current.
    pub rated_power_w: Option<f64>,
    /// Anode hydrogen stoichiometry.
    pub sigma_h2: f64,
    /// Samples below this current are ignored for the worst-case OER, A.
    pub oer_current_threshold: f64,
    /// Controller and governor period, s.
    pub ts: f64,
    /// Current of the map-tracking steady state the governor's prediction model is
    /// linearized about, A; `None` uses the controller design point.
    pub prediction_current: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            op_point: [180.0, 0.45, 190.0],
            imc: ImcConfig::default(),
            governor: GovernorConfig::default(),
            limits: ActuatorLimits::default(),
            siso_throttle: 0.5,
            power_tau: 0.5,
            identification_current: 140.0,
            rated_power_w: None,
            sigma_h2: 1.0,
            oer_current_threshold: 10.0,
            ts: super::DEFAULT_TS,
            prediction_current: Some(145.0),
        }
    }
}

/// Identified current-to-net-power model and its operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLoopModel {
    pub fit: FirstOrderFit,
    pub current: f64,
    pub power: f64,
    pub rated_power: f64,
}

/// Everything built once per parameter set and shared by scenarios.
#[derive(Debug)]
pub struct System {
    pub params: PlantParams,
    pub config: SystemConfig,
    pub map: SetpointMap,
    pub linearization: Linearization,
    pub imc: DiscreteImc,
    pub siso_imc: DiscreteImc,
    pub prediction: PredictionModel,
    load: OnceLock<LoadGovernor>,
    cascade: OnceLock<CascadeGovernor>,
    power: OnceLock<PowerLoopModel>,
}

impl System {
    pub fn new(params: PlantParams, map: SetpointMap, config: SystemConfig) -> Result<Self, SimError> {
        config.governor.validate()?;
        let [v, u, i] = config.op_point;
        let linearization = linearize(&params, PlantInputs::new(v, u, i))?;
        let design = design_plant();
        let filter = design_filter(&config.imc)?;
        let imc = design_controller(&design, &filter)?.discretize(config.ts)?;
        let (_, siso_imc) = design_scalar_imc(&design.channel(0, 0), config.imc.tau1, config.ts)?;
        let prediction = PredictionModel::build(&linearization, &imc, &DVector::zeros(2))?;
        let mut sys = Self {
            params,
            config,
            map,
            linearization,
            imc,
            siso_imc,
            prediction,
            load: OnceLock::new(),
            cascade: OnceLock::new(),
            power: OnceLock::new(),
        };
        if let Some(i) = sys.config.prediction_current {
            let sp = sys.steady_point(i)?;
            let lin = linearize_at(&sys.params, sp.state, sp.inputs);
            if !lin.model.is_stable() {
                return Err(PlantError::UnstableLinearization.into());
            }
            let du = DVector::from_vec(vec![sp.inputs.v_cm - v, sp.inputs.u_om - u]);
            sys.prediction = PredictionModel::build(&lin, &sys.imc, &du)?;
        }
        Ok(sys)
    }

    /// Least-squares line through the pressure map, (offset Pa, slope Pa/A).
    pub fn pressure_line(&self) -> (f64, f64) {
        let (x, y) = (&self.map.breakpoints, &self.map.pressures);
        let n = x.len() as f64;
        if x.len() < 2 {
            return (y[0], 0.0);
        }
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (my - slope * mx, slope)
    }

    pub fn load_governor(&self) -> Result<LoadGovernor, SimError> {
        if let Some(g) = self.load.get() {
            return Ok(g.clone());
        }
        let g = LoadGovernor::new(&self.prediction, self.map.flow_gain, self.pressure_line(), &self.config.governor)?;
        Ok(self.load.get_or_init(|| g).clone())
    }

    pub fn cascade_governor(&self) -> Result<CascadeGovernor, SimError> {
        if let Some(g) = self.cascade.get() {
            return Ok(g.clone());
        }
        let g = CascadeGovernor::new(&self.prediction, &self.config.governor)?;
        Ok(self.cascade.get_or_init(|| g).clone())
    }

    /// Plant steady state tracking the maps at a current.
    pub fn steady_point(&self, current: f64) -> Result<SteadyPoint, SimError> {
        Ok(steady_state_for_setpoints(
            &self.params,
            current,
            self.map.flow_setpoint(current),
            self.map.pressure_setpoint(current),
        )?)
    }

    /// Steady net power with the maps tracked, W.
    pub fn steady_power(&self, current: f64) -> Result<f64, SimError> {
        let sp = self.steady_point(current)?;
        Ok(net_power_and_efficiency(&sp.state, &sp.inputs, &self.params).0)
    }

    pub fn rated_power(&self) -> Result<f64, SimError> {
        match self.config.rated_power_w {
            Some(p) => Ok(p),
            None => self.steady_power(*self.map.breakpoints.last().expect("nonempty map")),
        }
    }

    pub fn power_model(&self) -> Result<PowerLoopModel, SimError> {
        if let Some(m) = self.power.get() {
            return Ok(*m);
        }
        let m = super::run::identify_power_model(self)?;
        Ok(*self.power.get_or_init(|| m))
    }
}
