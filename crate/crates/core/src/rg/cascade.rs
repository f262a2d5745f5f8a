use super::{
    cs_bounds, cs_rg_step, cs_tolerance, kappa_recover, kappa_step, oer_constraint_rows, GovernorConfig, PredictionModel, RgError,
    KappaStep, FLOW_SCALE, PRESSURE_SCALE,
};
use crate::lti::StateSpaceModel;
use crate::mas::{build_mas_feedthrough, select_horizon, MasPolytope, OperatingBox, HORIZON_CAP};
use nalgebra::{DMatrix, DVector};

/// Half-widths of the reference deviations used for horizon selection: g/s, bar, A.
const REFERENCE_SPAN: [f64; 3] = [40.0, 1.5, 150.0];
const ENVELOPE_STEPS: usize = 400;
const ENVELOPE_FACTOR: f64 = 2.0;

/// State box covering responses to any input inside the given half-widths.
fn envelope_box(model: &StateSpaceModel, half: &[f64], fixed: &[Option<f64>]) -> OperatingBox {
    let n = model.order();
    let mut reach = DVector::<f64>::zeros(n);
    for (j, &h) in half.iter().enumerate() {
        let mut x = DVector::zeros(n);
        let mut peak = DVector::<f64>::zeros(n);
        let u = DVector::from_fn(model.inputs(), |i, _| if i == j { 1.0 } else { 0.0 });
        for _ in 0..ENVELOPE_STEPS {
            x = &model.a * &x + &model.b * &u;
            peak.zip_apply(&x, |p, v| *p = p.max(v.abs()));
        }
        reach += peak * h;
    }
    OperatingBox {
        x: reach.iter().map(|&r| (-ENVELOPE_FACTOR * r - 1e-6, ENVELOPE_FACTOR * r + 1e-6)).collect(),
        u: half
            .iter()
            .zip(fixed)
            .map(|(&h, f)| f.map_or((-h, h), |v| (v, v)))
            .collect(),
    }
}

fn build_oer_mas(model: &StateSpaceModel, pm: &PredictionModel, cfg: &GovernorConfig, span: &[f64], fixed: &[Option<f64>]) -> Result<MasPolytope, RgError> {
    cfg.validate()?;
    let c = oer_constraint_rows(cfg.lambda_min, pm.nominal_oer_outputs())?;
    let jstar = match cfg.jstar {
        Some(j) => j,
        None => select_horizon(model, &c, cfg.eps, &envelope_box(model, span, fixed), HORIZON_CAP)?.jstar,
    };
    Ok(build_mas_feedthrough(model, 0, &c, cfg.eps, jstar)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    CrossSection,
    Kappa,
}

/// Per-stage governor log entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDiagnostics {
    pub kind: StageKind,
    /// κ for scalar stages; the ratio of governed to desired change for cross-section stages.
    pub kappa: f64,
    pub binding_row: Option<usize>,
    pub margin: f64,
    /// Infeasible start for κ stages, empty interval or overshoot conflict for the cross-section stage.
    pub flagged: bool,
}

/// Scalar κ governor on stack current, with flow and pressure references slaved to it.
#[derive(Debug, Clone)]
pub struct LoadGovernor {
    pub mas: MasPolytope,
    /// Flow reference per ampere, g/(s·A).
    flow_slope: f64,
    /// Pressure reference line in bar: offset and slope per ampere.
    pressure_line: (f64, f64),
    nominal_current: f64,
    v_prev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStep {
    pub current: f64,
    pub diagnostics: ChannelDiagnostics,
}

impl LoadGovernor {
    /// `flow_gain` in kg/(s·A); `pressure_line` as (offset Pa, slope Pa/A) approximating the pressure map.
    pub fn new(pm: &PredictionModel, flow_gain: f64, pressure_line: (f64, f64), cfg: &GovernorConfig) -> Result<Self, RgError> {
        let m = &pm.model;
        let i0 = pm.nominal_current();
        let [w0, p0] = pm.nominal_tracked();
        let kw = flow_gain * FLOW_SCALE;
        let kp = pressure_line.1 * PRESSURE_SCALE;
        let cw = kw * i0 - w0;
        let cp = (pressure_line.0 + pressure_line.1 * i0) * PRESSURE_SCALE - p0;
        // inputs: current deviation, then a unit constant carrying the map offsets
        let map = DMatrix::from_row_slice(3, 2, &[kw, cw, kp, cp, 1.0, 0.0]);
        let model = StateSpaceModel::new(m.a.clone(), &m.b * &map, m.c.clone(), &m.d * &map, m.ts)?;
        let mas = build_oer_mas(&model, pm, cfg, &[REFERENCE_SPAN[2], 1.0], &[None, Some(1.0)])?;
        Ok(Self {
            mas,
            flow_slope: kw,
            pressure_line: (pressure_line.0 * PRESSURE_SCALE, kp),
            nominal_current: i0,
            v_prev: 0.0,
        })
    }

    /// Start from an admissible current.
    pub fn reset(&mut self, current: f64) {
        self.v_prev = current - self.nominal_current;
    }

    pub fn current(&self) -> f64 {
        self.v_prev + self.nominal_current
    }

    /// Flow [g/s] and pressure [bar] references the governor assumes for a current.
    pub fn assumed_references(&self, current: f64) -> (f64, f64) {
        (self.flow_slope * current, self.pressure_line.0 + self.pressure_line.1 * current)
    }

    pub fn step(&mut self, z: &DVector<f64>, desired_current: f64) -> LoadStep {
        let r = desired_current - self.nominal_current;
        let k = kappa_step(&self.mas, z, self.v_prev, r, &[1.0]);
        self.v_prev = k.v;
        LoadStep {
            current: self.current(),
            diagnostics: ChannelDiagnostics {
                kind: StageKind::Kappa,
                kappa: k.kappa,
                binding_row: k.binding_row,
                margin: k.margin,
                flagged: k.infeasible,
            },
        }
    }
}

/// Flow cross-section governor, then pressure and current κ governors, sharing one set.
#[derive(Debug, Clone)]
pub struct CascadeGovernor {
    pub mas: MasPolytope,
    overshoot: f64,
    tol_rel: f64,
    v_prev: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeStep {
    /// Governed references in model deviation units: g/s, bar, A.
    pub v: [f64; 3],
    pub diagnostics: [ChannelDiagnostics; 3],
}

/// κ step that, when the held reference fell outside the set because upstream
/// feedthroughs moved, jumps to the furthest admissible point toward `r` instead of holding.
fn recovering_step(mas: &MasPolytope, z: &DVector<f64>, v_prev: f64, r: f64, w: &[f64]) -> KappaStep {
    let k = kappa_step(mas, z, v_prev, r, w);
    if !k.infeasible {
        return k;
    }
    kappa_recover(mas, z, v_prev, r, w).unwrap_or(k)
}

impl CascadeGovernor {
    pub fn new(pm: &PredictionModel, cfg: &GovernorConfig) -> Result<Self, RgError> {
        let mas = build_oer_mas(&pm.model, pm, cfg, &REFERENCE_SPAN, &[None; 3])?;
        Ok(Self::from_mas(mas, cfg))
    }

    pub fn from_mas(mas: MasPolytope, cfg: &GovernorConfig) -> Self {
        Self {
            mas,
            overshoot: cfg.overshoot,
            tol_rel: cfg.cs_tol_rel,
            v_prev: [0.0; 3],
        }
    }

    /// Start from admissible deviation references.
    pub fn reset(&mut self, v: [f64; 3]) {
        self.v_prev = v;
    }

    pub fn previous(&self) -> [f64; 3] {
        self.v_prev
    }

    /// One tick. `desired` are deviation references; `flow_nominal` is the absolute
    /// desired flow reference minus the deviation, so the overshoot band is relative to it.
    pub fn step(&mut self, z: &DVector<f64>, desired: [f64; 3], flow_offset: f64) -> CascadeStep {
        let [w_des, p_des, i_des] = desired;
        // flow: cross-section with desired pressure and current as feedthroughs
        let flow_mas = self.mas.with_governed(0);
        let tol = cs_tolerance(&flow_mas, self.tol_rel);
        let bounds = cs_bounds(&flow_mas, z, &[p_des, i_des], tol);
        let abs = w_des + flow_offset;
        let band = (abs * (1.0 - self.overshoot) - flow_offset, abs * (1.0 + self.overshoot) - flow_offset);
        let cs = cs_rg_step(bounds, w_des, Some((band.0.min(band.1), band.0.max(band.1))));
        let v_w = cs.v;
        let flow_diag = ChannelDiagnostics {
            kind: StageKind::CrossSection,
            kappa: if w_des != self.v_prev[0] { (v_w - self.v_prev[0]) / (w_des - self.v_prev[0]) } else { 1.0 },
            binding_row: None,
            margin: flow_mas.contains(z, v_w, &[p_des, i_des]).1,
            flagged: cs.conflict,
        };
        // pressure: κ with desired current and governed flow
        let kp = recovering_step(&self.mas.with_governed(1), z, self.v_prev[1], p_des, &[v_w, i_des]);
        // current: κ with governed flow and pressure
        let ki = recovering_step(&self.mas.with_governed(2), z, self.v_prev[2], i_des, &[v_w, kp.v]);
        let diag = |k: super::KappaStep| ChannelDiagnostics {
            kind: StageKind::Kappa,
            kappa: k.kappa,
            binding_row: k.binding_row,
            margin: k.margin,
            flagged: k.infeasible,
        };
        self.v_prev = [v_w, kp.v, ki.v];
        CascadeStep {
            v: self.v_prev,
            diagnostics: [flow_diag, diag(kp), diag(ki)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imc::{design_controller, design_filter, ImcConfig};
    use crate::plant::{design_plant, linearize, PlantInputs, PlantParams};
    use std::sync::OnceLock;

    pub(crate) fn prediction() -> &'static PredictionModel {
        static PM: OnceLock<PredictionModel> = OnceLock::new();
        PM.get_or_init(|| {
            let lin = linearize(&PlantParams::default(), PlantInputs::new(180.0, 0.45, 190.0)).unwrap();
            let f = design_filter(&ImcConfig::default()).unwrap();
            let imc = design_controller(&design_plant(), &f).unwrap().discretize(0.02).unwrap();
            PredictionModel::build(&lin, &imc, &DVector::zeros(2)).unwrap()
        })
    }

    #[test]
    fn prediction_model_shape_and_dc() {
        let pm = prediction();
        assert_eq!(pm.model.order(), 18);
        assert_eq!((pm.model.inputs(), pm.model.outputs()), (3, 2));
        // O2 consumption follows current only
        let g = pm.model.dc_gain().unwrap();
        assert!(g[(1, 0)].abs() < 1e-9 && g[(1, 1)].abs() < 1e-9 && g[(1, 2)] > 0.0);
        // O2 supply rises with the flow reference
        assert!(g[(0, 0)] > 0.0);
    }

    #[test]
    fn steady_oer_row_signs() {
        let pm = prediction();
        let gov = CascadeGovernor::new(pm, &GovernorConfig::default()).unwrap();
        let row = gov.mas.hu.row(0);
        assert!(row[0] < 0.0, "flow raises the margin");
        assert!(row[1] >= -1e-9, "pressure does not raise the margin");
        assert!(row[2] > 0.0, "current lowers the margin");
    }

    #[test]
    fn admissible_references_pass_unchanged() {
        let pm = prediction();
        let mut gov = CascadeGovernor::new(pm, &GovernorConfig::default()).unwrap();
        let z = DVector::zeros(18);
        let w0 = pm.nominal_tracked()[0];
        let s = gov.step(&z, [0.0, 0.0, 0.0], w0);
        assert_eq!(s.v, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_feedthrough_current_stage_matches_scalar_kappa() {
        let pm = prediction();
        let cfg = GovernorConfig::default();
        let mut gov = CascadeGovernor::new(pm, &cfg).unwrap();
        gov.mas.hu.column_mut(0).fill(0.0);
        gov.mas.hu.column_mut(1).fill(0.0);
        let z = DVector::zeros(18);
        let alone = kappa_step(&gov.mas.with_governed(2), &z, 0.0, 60.0, &[0.0, 0.0]);
        let s = gov.step(&z, [5.0, 0.2, 60.0], pm.nominal_tracked()[0]);
        assert_eq!(s.v[2], alone.v);
    }

    #[test]
    fn governed_current_step_keeps_linear_oer() {
        let pm = prediction();
        let cfg = GovernorConfig::default();
        let mut gov = CascadeGovernor::new(pm, &cfg).unwrap();
        let c = oer_constraint_rows(cfg.lambda_min, pm.nominal_oer_outputs()).unwrap();
        let m = &pm.model;
        let mut z = DVector::zeros(18);
        let w0 = pm.nominal_tracked()[0];
        // large current step with flow and pressure references following the same step
        let des = [-20.0, -0.6, -90.0];
        for _ in 0..100 {
            gov.step(&z, [0.0; 3], w0);
        }
        let mut limited = false;
        for k in 0..400 {
            let d = if k < 5 { des } else { [0.0, 0.0, 0.0] };
            let s = gov.step(&z, d, w0);
            limited |= s.diagnostics[2].kappa < 1.0;
            let u = DVector::from_column_slice(&s.v);
            let (zn, y) = m.step(&z, &u);
            assert!(c.margin(&y) >= -1e-9, "tick {k}: {}", c.margin(&y));
            z = zn;
        }
        assert!(limited);
    }
}
