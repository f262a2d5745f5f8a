use super::RgError;
use crate::imc::{DiscreteImc, ImcRuntime};
use crate::lti::StateSpaceModel;
use crate::plant::{Linearization, PlantState};
use nalgebra::{DMatrix, DVector};

/// Plant state scaling into prediction coordinates: Pa to bar, rad/s to 10⁴ rad/s.
pub const STATE_SCALE: [f64; 3] = [1e-5, 1e-4, 1e-5];
/// kg/s to g/s.
pub const FLOW_SCALE: f64 = 1e3;
/// Pa to bar.
pub const PRESSURE_SCALE: f64 = 1e-5;

/// Discrete linear model of plant plus IMC, driven by the references the governor shapes.
///
/// State `z = (x_p, x_q, x_g)` with the plant part scaled by [`STATE_SCALE`].
/// Inputs: flow reference [g/s], pressure reference [bar], stack current [A], all as
/// deviations from the linearization point. Outputs: O2 supplied and consumed [g/s],
/// also as deviations.
#[derive(Debug, Clone)]
pub struct PredictionModel {
    pub model: StateSpaceModel,
    pub linearization: Linearization,
    pub plant_order: usize,
    pub q_order: usize,
    pub g_order: usize,
    /// Controller states at the prediction point, subtracted in [`Self::augmented_state`].
    pub xq0: DVector<f64>,
    pub xg0: DVector<f64>,
    /// (I − A)⁻¹B: equilibrium state per constant reference deviation.
    steady_map: DMatrix<f64>,
}

impl PredictionModel {
    /// `lin` is the plant linearization used for prediction; `control_du` is the controller's
    /// input deviation at that point (zero when the controller was designed there too).
    pub fn build(lin: &Linearization, imc: &DiscreteImc, control_du: &DVector<f64>) -> Result<Self, RgError> {
        let ts = imc.q.ts;
        let mut rt = ImcRuntime::new(imc.clone()).map_err(|e| RgError::Model(e.to_string()))?;
        rt.initialize_steady(control_du).map_err(|e| RgError::Model(e.to_string()))?;
        let (xq0, xg0) = (rt.states().0.clone(), rt.states().1.clone());
        let plant = lin.model.discretize(ts)?;
        let t = DMatrix::from_diagonal(&DVector::from_column_slice(&STATE_SCALE));
        let ti = DMatrix::from_diagonal(&DVector::from_iterator(3, STATE_SCALE.iter().map(|s| 1.0 / s)));
        let out = DMatrix::from_diagonal(&DVector::from_vec(vec![FLOW_SCALE, PRESSURE_SCALE, FLOW_SCALE, FLOW_SCALE]));
        let ap = &t * &plant.a * &ti;
        let bp = &t * &plant.b;
        let cp_all = &out * &plant.c * &ti;
        let dp_all = &out * &plant.d;
        let (cy, dy) = (cp_all.rows(0, 2).into_owned(), dp_all.rows(0, 2).into_owned());
        let (co, dout) = (cp_all.rows(2, 2).into_owned(), dp_all.rows(2, 2).into_owned());
        if dy.iter().any(|&v| v != 0.0) {
            return Err(RgError::Model("tracked outputs must not have direct feedthrough".into()));
        }
        let (q, g) = (&imc.q, &imc.model);
        let (np, nq, ng) = (3, q.order(), g.order());
        let n = np + nq + ng;
        let bu = bp.columns(0, 2).into_owned();
        let bi = bp.column(2).into_owned();
        // u = Kx z + Kr r
        let mut kx = DMatrix::zeros(2, n);
        kx.view_mut((0, 0), (2, np)).copy_from(&(-&q.d * &cy));
        kx.view_mut((0, np), (2, nq)).copy_from(&q.c);
        kx.view_mut((0, np + nq), (2, ng)).copy_from(&(&q.d * &g.c));
        let kr = q.d.clone();

        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, 3);
        // plant
        a.view_mut((0, 0), (np, np)).copy_from(&ap);
        let pa = &bu * &kx;
        a.view_mut((0, 0), (np, n)).zip_apply(&pa, |x, y| *x += y);
        b.view_mut((0, 0), (np, 2)).copy_from(&(&bu * &kr));
        b.view_mut((0, 2), (np, 1)).copy_from(&bi);
        // controller: e = r − C_y x_p + C_g x_g
        a.view_mut((np, 0), (nq, np)).copy_from(&(-&q.b * &cy));
        a.view_mut((np, np), (nq, nq)).copy_from(&q.a);
        a.view_mut((np, np + nq), (nq, ng)).copy_from(&(&q.b * &g.c));
        b.view_mut((np, 0), (nq, 2)).copy_from(&q.b);
        // internal model
        let ga = &g.b * &kx;
        a.view_mut((np + nq, 0), (ng, n)).copy_from(&ga);
        a.view_mut((np + nq, np + nq), (ng, ng)).zip_apply(&g.a, |x, y| *x += y);
        b.view_mut((np + nq, 0), (ng, 2)).copy_from(&(&g.b * &kr));
        // O2 outputs
        let du = dout.columns(0, 2).into_owned();
        let mut c = &du * &kx;
        c.view_mut((0, 0), (2, np)).zip_apply(&co, |x, y| *x += y);
        let mut d = DMatrix::zeros(2, 3);
        d.view_mut((0, 0), (2, 2)).copy_from(&(&du * &kr));
        d.view_mut((0, 2), (2, 1)).copy_from(&dout.column(2));
        let model = StateSpaceModel::new(a, b, c, d, ts)?;
        if !model.is_stable() {
            return Err(RgError::Model(format!(
                "closed-loop prediction model is unstable (spectral radius {:.6})",
                model.spectral_radius()
            )));
        }
        let n = model.order();
        let steady_map = (DMatrix::identity(n, n) - &model.a)
            .lu()
            .solve(&model.b)
            .ok_or_else(|| RgError::Model("prediction model has a pole at one".into()))?;
        Ok(Self {
            steady_map,
            model,
            linearization: lin.clone(),
            plant_order: np,
            q_order: nq,
            g_order: ng,
            xq0,
            xg0,
        })
    }

    /// O2 supplied and consumed at the linearization point, g/s.
    pub fn nominal_oer_outputs(&self) -> [f64; 2] {
        [self.linearization.outputs[2] * FLOW_SCALE, self.linearization.outputs[3] * FLOW_SCALE]
    }

    /// Tracked outputs at the linearization point: flow [g/s], pressure [bar].
    pub fn nominal_tracked(&self) -> [f64; 2] {
        [self.linearization.outputs[0] * FLOW_SCALE, self.linearization.outputs[1] * PRESSURE_SCALE]
    }

    pub fn nominal_current(&self) -> f64 {
        self.linearization.inputs.i_st
    }

    /// Augmented state from the plant state and the controller's internal states.
    pub fn augmented_state(&self, x: &PlantState, imc: &ImcRuntime) -> DVector<f64> {
        let x0 = self.linearization.state.to_array();
        let xa = x.to_array();
        let (xq, xg) = imc.states();
        DVector::from_iterator(
            self.model.order(),
            (0..3)
                .map(|i| (xa[i] - x0[i]) * STATE_SCALE[i])
                .chain((xq - &self.xq0).iter().copied())
                .chain((xg - &self.xg0).iter().copied()),
        )
    }

    /// Equilibrium of the prediction model under constant reference deviations `v`.
    pub fn equilibrium(&self, v: &[f64; 3]) -> DVector<f64> {
        &self.steady_map * DVector::from_column_slice(v)
    }

    /// Augmented state of the closed loop resting at plant state `x` with controller input
    /// deviation `du`. `scratch` is overwritten.
    pub fn steady_augmented(&self, x: &PlantState, du: &DVector<f64>, scratch: &mut ImcRuntime) -> Result<DVector<f64>, RgError> {
        scratch.initialize_steady(du).map_err(|e| RgError::Model(e.to_string()))?;
        Ok(self.augmented_state(x, scratch))
    }

    /// Reference deviations in model units from absolute flow [kg/s], pressure [Pa] and current [A].
    pub fn to_deviation(&self, flow: f64, pressure: f64, current: f64) -> [f64; 3] {
        let [w0, p0] = self.nominal_tracked();
        [flow * FLOW_SCALE - w0, pressure * PRESSURE_SCALE - p0, current - self.nominal_current()]
    }

    /// Inverse of [`Self::to_deviation`].
    pub fn from_deviation(&self, d: [f64; 3]) -> (f64, f64, f64) {
        let [w0, p0] = self.nominal_tracked();
        ((d[0] + w0) / FLOW_SCALE, (d[1] + p0) / PRESSURE_SCALE, d[2] + self.nominal_current())
    }
}
