//! Coupling and robustness analysis: relative gain array, classical and disk margins.

mod disk;

pub use disk::{disk_margins, DiskMargin, DiskSelection, LoopResponse, DelayedLoop};

use crate::imc::{DiscreteImc, ImcError};
use crate::lti::{logspace, LtiError, StateSpaceModel, TransferMatrix};
use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use std::io::Write;
use thiserror::Error;

/// Default analysis grid, rad/s.
pub const GRID_RANGE: (f64, f64) = (1e-2, 1e4);
pub const GRID_POINTS: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("G(j{omega}) is singular (condition number {condition:.3e})")]
    Singular { omega: f64, condition: f64 },
    #[error("analysis needs a {expected} system, got {rows}x{cols}")]
    Shape { expected: &'static str, rows: usize, cols: usize },
    #[error("closed loop is unstable")]
    UnstableLoop,
    #[error(transparent)]
    Imc(#[from] ImcError),
}

/// Loop-at-a-time margins per input channel plus the simultaneous margin.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopMargins {
    pub channels: Vec<DiskMargin>,
    pub all: DiskMargin,
}

/// Disk margins at the plant input of a sampled IMC loop.
///
/// `plant` is continuous and is sampled with a zero-order hold at the controller
/// period; `delay` is an extra transport delay in seconds.
pub fn imc_loop_margins(plant: &StateSpaceModel, imc: &DiscreteImc, delay: f64) -> Result<LoopMargins, AnalysisError> {
    let ts = imc.q.ts;
    let gp = if plant.is_discrete() { plant.clone() } else { plant.discretize(ts)? };
    let l = DelayedLoop {
        model: imc.input_loop(&gp)?,
        delay,
    };
    let channels = (0..l.dim())
        .map(|i| disk_margins(&l, DiskSelection::Channel(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let all = disk_margins(&l, DiskSelection::All)?;
    Ok(LoopMargins { channels, all })
}

pub fn default_grid() -> Vec<f64> {
    logspace(GRID_RANGE.0, GRID_RANGE.1, GRID_POINTS)
}

fn check_2x2(g: &TransferMatrix) -> Result<(), AnalysisError> {
    if g.rows() != 2 || g.cols() != 2 {
        return Err(AnalysisError::Shape {
            expected: "2x2",
            rows: g.rows(),
            cols: g.cols(),
        });
    }
    Ok(())
}

/// Relative gain array `G ∘ (G⁻¹)ᵀ` of a complex 2×2 matrix.
pub fn rga_of(m: &DMatrix<Complex64>, omega: f64) -> Result<Matrix2<Complex64>, AnalysisError> {
    let g = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let det = g.determinant();
    let svd = g.svd(false, false);
    let (smax, smin) = (svd.singular_values[0], svd.singular_values[1]);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if det.norm() == 0.0 || condition > 1e12 {
        return Err(AnalysisError::Singular { omega, condition });
    }
    let inv = g.try_inverse().ok_or(AnalysisError::Singular { omega, condition })?;
    Ok(g.component_mul(&inv.transpose()))
}

pub fn rga(g: &TransferMatrix, omega: f64) -> Result<Matrix2<Complex64>, AnalysisError> {
    check_2x2(g)?;
    rga_of(&g.freq_response(omega)?, omega)
}

/// Magnitudes of the RGA over a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RgaResult {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<[[f64; 2]; 2]>,
}

pub fn rga_sweep(g: &TransferMatrix, frequencies: &[f64]) -> Result<RgaResult, AnalysisError> {
    let mut magnitudes = Vec::with_capacity(frequencies.len());
    for &w in frequencies {
        let r = rga(g, w)?;
        magnitudes.push([[r[(0, 0)].norm(), r[(0, 1)].norm()], [r[(1, 0)].norm(), r[(1, 1)].norm()]]);
    }
    Ok(RgaResult {
        frequencies: frequencies.to_vec(),
        magnitudes,
    })
}

impl RgaResult {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["omega_rad_s", "r11", "r12", "r21", "r22"]).map_err(std::io::Error::other)?;
        for (f, m) in self.frequencies.iter().zip(&self.magnitudes) {
            let row = [*f, m[0][0], m[0][1], m[1][0], m[1][1]].map(crate::io::fmt17);
            wr.write_record(&row).map_err(std::io::Error::other)?;
        }
        wr.flush()
    }
}

/// Gain margin in dB and phase margin in degrees; `f64::INFINITY` when no crossover exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalMargins {
    pub gain_margin_db: f64,
    pub phase_margin_deg: f64,
    pub phase_crossover: Option<f64>,
    pub gain_crossover: Option<f64>,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Margins of a scalar loop from crossover search on the default grid with bisection refinement.
pub fn classical_margins(l: &TransferMatrix) -> Result<ClassicalMargins, AnalysisError> {
    if l.rows() != 1 || l.cols() != 1 {
        return Err(AnalysisError::Shape {
            expected: "1x1",
            rows: l.rows(),
            cols: l.cols(),
        });
    }
    let eval = |w: f64| l.freq_response(w).map(|m| m[(0, 0)]);
    let grid = default_grid();
    let mut vals = Vec::with_capacity(grid.len());
    for &w in &grid {
        vals.push(eval(w)?);
    }
    // unwrapped phase in degrees
    let mut phase = Vec::with_capacity(vals.len());
    let mut offset = 0.0;
    let mut prev = vals[0].arg();
    for v in &vals {
        let a = v.arg();
        let d = a - prev;
        if d > std::f64::consts::PI {
            offset -= 2.0 * std::f64::consts::PI;
        } else if d < -std::f64::consts::PI {
            offset += 2.0 * std::f64::consts::PI;
        }
        prev = a;
        phase.push((a + offset).to_degrees());
    }
    let unwrapped = |w: f64, near: f64| {
        let a = eval(w).map(|c| c.arg().to_degrees()).unwrap_or(near);
        a + 360.0 * ((near - a) / 360.0).round()
    };

    let mut gm = f64::INFINITY;
    let mut wpc = None;
    for k in 1..grid.len() {
        let (p0, p1) = (phase[k - 1], phase[k]);
        let (lo, hi) = (p0.min(p1), p0.max(p1));
        let kmin = ((lo + 180.0) / 360.0).ceil() as i64;
        let kmax = ((hi + 180.0) / 360.0).floor() as i64;
        for n in kmin..=kmax {
            let t = -180.0 + 360.0 * n as f64;
            if lo < t && t <= hi {
                let w = bisect(|w| unwrapped(w, p0) - t, grid[k - 1], grid[k]);
                let mag = eval(w)?.norm();
                let m = -20.0 * mag.log10();
                if m.abs() < gm.abs() {
                    gm = m;
                    wpc = Some(w);
                }
            }
        }
    }
    let mut pm = f64::INFINITY;
    let mut wgc = None;
    for k in 1..grid.len() {
        let (m0, m1) = (vals[k - 1].norm().ln(), vals[k].norm().ln());
        if m0 * m1 < 0.0 || m1 == 0.0 {
            let w = bisect(|w| eval(w).map(|c| c.norm().ln()).unwrap_or(0.0), grid[k - 1], grid[k]);
            let ph = unwrapped(w, phase[k - 1]);
            let m = (ph + 180.0).rem_euclid(360.0);
            let m = if m > 180.0 { m - 360.0 } else { m };
            if m.abs() < pm.abs() {
                pm = m;
                wgc = Some(w);
            }
        }
    }
    Ok(ClassicalMargins {
        gain_margin_db: gm,
        phase_margin_deg: pm,
        phase_crossover: wpc,
        gain_crossover: wgc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::PolynomialRatio;
    use crate::plant::design_plant;

    fn tf(n: &[f64], d: &[f64]) -> PolynomialRatio {
        PolynomialRatio::from_coeffs(n, d).unwrap()
    }

    #[test]
    fn diagonal_plant_has_identity_rga() {
        let g = TransferMatrix::diagonal(vec![tf(&[1.0], &[1.0, 1.0]), tf(&[2.0], &[1.0, 3.0])]);
        for w in [0.0, 1.0, 50.0] {
            let r = rga(&g, w).unwrap();
            assert!((r - Matrix2::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn rga_rows_and_columns_sum_to_one() {
        let g = design_plant();
        for w in default_grid().into_iter().step_by(37) {
            let r = rga(&g, w).unwrap();
            for i in 0..2 {
                assert!((r[(i, 0)] + r[(i, 1)] - 1.0).norm() < 1e-9);
                assert!((r[(0, i)] + r[(1, i)] - 1.0).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn antidiagonal_constant_gives_exchange() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -2.0, 0.0]);
        let r = rga(&TransferMatrix::static_gain(&k), 1.0).unwrap();
        assert!((r[(0, 1)] - 1.0).norm() < 1e-12 && r[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn singular_plant_reports_conditioning() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            rga(&TransferMatrix::static_gain(&k), 0.0),
            Err(AnalysisError::Singular { .. })
        ));
    }

    #[test]
    fn calibrated_loop_margins() {
        use crate::imc::{design_controller, design_filter, ImcConfig};
        use crate::plant::{linearize, PlantInputs, PlantParams};
        let lin = linearize(&PlantParams::default(), PlantInputs::new(180.0, 0.45, 190.0)).unwrap();
        let f = design_filter(&ImcConfig::default()).unwrap();
        let imc = design_controller(&design_plant(), &f).unwrap().discretize(0.02).unwrap();
        let m = imc_loop_margins(&lin.design_channels(), &imc, 0.01).unwrap();
        assert!(m.all.alpha <= m.channels[0].alpha && m.all.alpha <= m.channels[1].alpha);
    }

    #[test]
    fn integrator_phase_margin() {
        let l = TransferMatrix::scalar(tf(&[1.0], &[1.0, 0.0]));
        let m = classical_margins(&l).unwrap();
        assert!((m.phase_margin_deg - 90.0).abs() < 1e-6);
        assert!(m.gain_margin_db.is_infinite());
    }

    #[test]
    fn small_gain_loop_has_infinite_gain_margin() {
        let l = TransferMatrix::scalar(tf(&[0.5], &[1.0, 1.0]));
        let m = classical_margins(&l).unwrap();
        assert!(m.gain_margin_db.is_infinite() && m.phase_margin_deg.is_infinite());
    }

    #[test]
    fn third_order_lag_gain_margin_matches_dense_scan() {
        let l = TransferMatrix::scalar(tf(&[10.0], &[1.0, 3.0, 3.0, 1.0]));
        let m = classical_margins(&l).unwrap();
        // dense scan for the -180° crossing
        let mut best = (f64::INFINITY, 0.0);
        for w in logspace(0.1, 10.0, 200_000) {
            let c = l.freq_response(w).unwrap()[(0, 0)];
            if c.im.abs() < best.0 && c.re < 0.0 {
                best = (c.im.abs(), -20.0 * c.norm().log10());
            }
        }
        assert!((m.gain_margin_db - best.1).abs() < 1e-3);
        assert!((m.phase_crossover.unwrap() - 3f64.sqrt()).abs() < 1e-9);
    }
}
