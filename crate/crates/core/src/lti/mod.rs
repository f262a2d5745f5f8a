//! Linear-systems algebra: polynomials, transfer matrices and state-space models.

mod poly;
mod ss;
mod tf;

pub use poly::{Polynomial, TRIM_RELATIVE};
pub use ss::StateSpaceModel;
pub use tf::{parallel, series, PolynomialRatio, TransferMatrix};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("denominator polynomial is identically zero")]
    ZeroDenominator,
    #[error("entry ({row},{col}) has a pole at omega = {omega} rad/s")]
    PoleAtFrequency { row: usize, col: usize, omega: f64 },
    #[error("transfer matrix is structurally singular")]
    StructuralSingularity,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("entry ({row},{col}) is improper and cannot be realized")]
    Improper { row: usize, col: usize },
    #[error("model is already discrete")]
    AlreadyDiscrete,
    #[error("invalid sample time {0}")]
    InvalidSampleTime(f64),
    #[error("invalid frequency {0}")]
    InvalidFrequency(f64),
    #[error("evaluation point is an eigenvalue of A")]
    SingularResolvent,
}

/// Log-spaced grid including both endpoints.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}
