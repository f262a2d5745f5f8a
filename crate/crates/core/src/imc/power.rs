use super::{poly_is_min_phase, properness_order, DiscreteImc, ImcError, ImcRuntime};
use crate::lti::{PolynomialRatio, StateSpaceModel, TransferMatrix};
use nalgebra::DVector;

/// `gain/(tau·s + 1)` fitted to a step response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderFit {
    pub gain: f64,
    pub tau: f64,
    /// RMS fit error normalized by the response range.
    pub nrmse: f64,
}

impl FirstOrderFit {
    pub fn transfer(&self) -> TransferMatrix {
        TransferMatrix::scalar(PolynomialRatio::lag(self.gain, self.tau, 1))
    }

    fn predict(&self, t: f64, du: f64) -> f64 {
        self.gain * du * (1.0 - (-t / self.tau).exp())
    }
}

/// Fits a first-order lag to the response `dy` (at times `t`, from 0) to an input step `du`.
pub fn identify_first_order(t: &[f64], du: f64, dy: &[f64]) -> FirstOrderFit {
    let n = dy.len();
    let tail = (n / 10).max(1);
    let gain = dy[n - tail..].iter().sum::<f64>() / tail as f64 / du;
    let sse = |tau: f64| {
        let fit = FirstOrderFit { gain, tau, nrmse: 0.0 };
        t.iter().zip(dy).map(|(&ti, &yi)| (fit.predict(ti, du) - yi).powi(2)).sum::<f64>()
    };
    let (mut a, mut b) = (1e-3f64.ln(), t[n - 1].max(1e-2).ln());
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if sse(c.exp()) <= sse(d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    let tau = ((a + b) / 2.0).exp();
    let range = dy.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - dy.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let nrmse = (sse(tau) / n as f64).sqrt() / range.max(f64::MIN_POSITIVE);
    FirstOrderFit { gain, tau, nrmse }
}

/// Scalar IMC from requested power deviation to stack-current deviation.
#[derive(Debug, Clone)]
pub struct PowerImc {
    pub q: TransferMatrix,
    pub runtime: ImcRuntime,
}

/// Scalar `Q = model⁻¹/(τs+1)^k` with `k` the model's relative degree, sampled at `ts`.
pub fn design_scalar_imc(model: &TransferMatrix, tau: f64, ts: f64) -> Result<(TransferMatrix, DiscreteImc), ImcError> {
    if model.rows() != 1 || model.cols() != 1 {
        return Err(ImcError::Config("scalar IMC needs a 1x1 model".into()));
    }
    if !(tau > 0.0) {
        return Err(ImcError::Config("filter time constant must be positive".into()));
    }
    let g = model.entry(0, 0);
    if g.is_zero() || !g.den().is_hurwitz() || !poly_is_min_phase(g.num()) {
        return Err(ImcError::BadIdentifiedModel);
    }
    let inv = g.recip()?;
    let k = properness_order(&inv).max(1);
    let q = TransferMatrix::scalar(inv.mul(&PolynomialRatio::lag(1.0, tau, k)));
    let imc = DiscreteImc {
        q: StateSpaceModel::realize(&q)?.discretize(ts)?,
        model: StateSpaceModel::realize(model)?.discretize(ts)?,
    };
    Ok((q, imc))
}

/// Power loop: `Q_p = model⁻¹/(τ_p s+1)^k`.
pub fn design_power_imc(model: &TransferMatrix, tau_p: f64, ts: f64) -> Result<PowerImc, ImcError> {
    let (q, imc) = design_scalar_imc(model, tau_p, ts)?;
    Ok(PowerImc {
        q,
        runtime: ImcRuntime::new(imc)?,
    })
}

impl PowerImc {
    /// Current deviation for a requested and a measured power deviation, optionally clamped.
    pub fn step(&mut self, request: f64, measured: f64, limits: Option<(f64, f64)>) -> f64 {
        let lim = limits.map(|(lo, hi)| super::InputLimits {
            lo: DVector::from_element(1, lo),
            hi: DVector::from_element(1, hi),
        });
        let s = self
            .runtime
            .step(&DVector::from_element(1, request), &DVector::from_element(1, measured), lim.as_ref());
        s.u_applied[0]
    }
}
