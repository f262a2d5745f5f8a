use super::{DiscreteImc, ImcError};
use nalgebra::DVector;

/// Actuator bounds in deviation coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLimits {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl InputLimits {
    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(u.len(), (0..u.len()).map(|i| u[i].clamp(self.lo[i], self.hi[i])))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImcStep {
    pub u_command: DVector<f64>,
    pub u_applied: DVector<f64>,
    /// Plant-model mismatch `y − ỹ` fed back this step.
    pub mismatch: DVector<f64>,
}

/// Sampled IMC loop state. The internal model is driven by the applied (saturated) input.
#[derive(Debug, Clone)]
pub struct ImcRuntime {
    imc: DiscreteImc,
    xq: DVector<f64>,
    xg: DVector<f64>,
}

impl ImcRuntime {
    pub fn new(imc: DiscreteImc) -> Result<Self, ImcError> {
        if imc.model.d.iter().any(|&v| v != 0.0) {
            return Err(ImcError::Config("internal model must be strictly proper".into()));
        }
        let (nq, ng) = (imc.q.order(), imc.model.order());
        Ok(Self {
            imc,
            xq: DVector::zeros(nq),
            xg: DVector::zeros(ng),
        })
    }

    pub fn imc(&self) -> &DiscreteImc {
        &self.imc
    }

    pub fn states(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.xq, &self.xg)
    }

    pub fn set_states(&mut self, xq: DVector<f64>, xg: DVector<f64>) {
        self.xq = xq;
        self.xg = xg;
    }

    /// Steady state that holds the deviation input `du` with zero tracking error.
    pub fn initialize_steady(&mut self, du: &DVector<f64>) -> Result<(), ImcError> {
        let solve = |a: &nalgebra::DMatrix<f64>, b: DVector<f64>| {
            let n = a.nrows();
            (nalgebra::DMatrix::identity(n, n) - a)
                .lu()
                .solve(&b)
                .ok_or(ImcError::UnstableModel)
        };
        let g = &self.imc.model;
        let q = &self.imc.q;
        self.xg = solve(&g.a, &g.b * du)?;
        let e = &g.c * &self.xg;
        self.xq = solve(&q.a, &q.b * &e)?;
        Ok(())
    }

    /// Model output `ỹ` at the current step.
    pub fn model_output(&self) -> DVector<f64> {
        &self.imc.model.c * &self.xg
    }

    /// One control update from deviation reference `r` and measurement `y`.
    pub fn step(&mut self, r: &DVector<f64>, y: &DVector<f64>, limits: Option<&InputLimits>) -> ImcStep {
        let q = &self.imc.q;
        let g = &self.imc.model;
        let mismatch = y - self.model_output();
        let e = r - &mismatch;
        let u_command = &q.c * &self.xq + &q.d * &e;
        let u_applied = limits.map_or_else(|| u_command.clone(), |l| l.clamp(&u_command));
        self.xq = &q.a * &self.xq + &q.b * &e;
        self.xg = &g.a * &self.xg + &g.b * &u_applied;
        ImcStep {
            u_command,
            u_applied,
            mismatch,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imc::{design_controller, design_filter, ImcConfig};
    use crate::plant::design_plant;

    fn runtime() -> ImcRuntime {
        let f = design_filter(&ImcConfig::default()).unwrap();
        let d = design_controller(&design_plant(), &f).unwrap().discretize(0.02).unwrap();
        ImcRuntime::new(d).unwrap()
    }

    #[test]
    fn exact_model_gives_zero_mismatch_and_tracks() {
        let mut rt = runtime();
        let plant = rt.imc().model.clone();
        let mut xp = DVector::zeros(plant.order());
        let r = DVector::from_vec(vec![2.0, 0.0]);
        let mut y = DVector::zeros(2);
        for _ in 0..1000 {
            let s = rt.step(&r, &y, None);
            assert!(s.mismatch.norm() < 1e-10);
            let (xn, _) = plant.step(&xp, &s.u_applied);
            xp = xn;
            y = &plant.c * &xp;
        }
        assert!((y[0] - 2.0).abs() < 1e-6 && y[1].abs() < 1e-6);
    }

    #[test]
    fn steady_initialization_is_a_fixed_point() {
        let mut rt = runtime();
        let du = DVector::from_vec(vec![5.0, -0.02]);
        rt.initialize_steady(&du).unwrap();
        let y = rt.model_output();
        let s = rt.step(&y, &y, None);
        assert!((s.u_command - du).norm() < 1e-9);
    }
}
