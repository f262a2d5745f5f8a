use super::{flow_gain, interp_clamped, SetpointError, SetpointMap};
use crate::plant::{net_power_and_efficiency, steady_state_for_setpoints, PlantParams};
use rayon::prelude::*;

/// Golden-section refinement stops once the bracket is narrower than this, Pa.
pub const REFINE_TOL_PA: f64 = 100.0;

/// Steady-state net efficiency at a stack current and a tracked supply pressure.
///
/// `None` means the point has no valid steady state.
pub trait SteadyStateEfficiency: Sync {
    fn efficiency(&self, i_st: f64, p_sm: f64) -> Option<f64>;
}

/// Steady state of any loop that tracks the flow map and the pressure exactly.
#[derive(Debug, Clone)]
pub struct ClosedFormSteadyState {
    pub params: PlantParams,
}

impl SteadyStateEfficiency for ClosedFormSteadyState {
    fn efficiency(&self, i_st: f64, p_sm: f64) -> Option<f64> {
        let w = flow_gain(&self.params) * i_st;
        let sp = steady_state_for_setpoints(&self.params, i_st, w, p_sm).ok()?;
        net_power_and_efficiency(&sp.state, &sp.inputs, &self.params).1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutGrid {
    pub currents: Vec<f64>,
    pub pressures: Vec<f64>,
}

impl Default for LutGrid {
    /// 75–212.5 A in 12.5 A steps; 105–300 kPa in 5 kPa steps.
    fn default() -> Self {
        Self {
            currents: (0..12).map(|k| 75.0 + 12.5 * k as f64).collect(),
            pressures: (0..40).map(|k| 105_000.0 + 5_000.0 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LutReport {
    pub map: SetpointMap,
    /// Coarse-grid argmax per current, `None` where nothing was feasible.
    pub coarse: Vec<Option<f64>>,
    /// Refined optimum per current before smoothing.
    pub refined: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

fn score(eval: &dyn SteadyStateEfficiency, i: f64, p: f64) -> f64 {
    eval.efficiency(i, p).unwrap_or(f64::NEG_INFINITY)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Pool-adjacent-violators projection onto nondecreasing sequences.
pub(crate) fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect()
}

/// Efficiency-maximizing pressure per grid current, refined and monotone-smoothed.
pub fn generate_pressure_lut(
    eval: &dyn SteadyStateEfficiency,
    grid: &LutGrid,
    params: &PlantParams,
) -> Result<LutReport, SetpointError> {
    let step = grid
        .pressures
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0_f64, f64::max)
        .max(REFINE_TOL_PA);
    let (lo, hi) = (grid.pressures[0], grid.pressures[grid.pressures.len() - 1]);
    let per_current: Vec<(Option<f64>, Option<f64>)> = grid
        .currents
        .par_iter()
        .map(|&i| {
            let best = grid
                .pressures
                .iter()
                .map(|&p| (p, score(eval, i, p)))
                .filter(|(_, e)| e.is_finite())
                .max_by(|a, b| a.1.total_cmp(&b.1));
            let Some((p0, e0)) = best else {
                return (None, None);
            };
            let a = (p0 - step).max(lo);
            let b = (p0 + step).min(hi);
            let pr = golden_max(|p| score(eval, i, p), a, b, REFINE_TOL_PA);
            let refined = if score(eval, i, pr) >= e0 { pr } else { p0 };
            (Some(p0), Some(refined))
        })
        .collect();
    let coarse: Vec<Option<f64>> = per_current.iter().map(|c| c.0).collect();
    let refined: Vec<Option<f64>> = per_current.iter().map(|c| c.1).collect();

    let ok: Vec<(f64, f64)> = grid
        .currents
        .iter()
        .zip(&refined)
        .filter_map(|(&i, p)| p.map(|p| (i, p)))
        .collect();
    if ok.is_empty() {
        return Err(SetpointError::NoFeasiblePoint);
    }
    let (oi, op): (Vec<f64>, Vec<f64>) = ok.into_iter().unzip();
    let mut warnings = Vec::new();
    let filled: Vec<f64> = grid
        .currents
        .iter()
        .zip(&refined)
        .map(|(&i, p)| {
            p.unwrap_or_else(|| {
                warnings.push(format!("no steady state at {i} A; interpolated from neighbours"));
                interp_clamped(&oi, &op, i)
            })
        })
        .collect();
    let smoothed = isotonic(&filled);
    let map = SetpointMap::new(flow_gain(params), grid.currents.clone(), smoothed, params.p_atm)?;
    Ok(LutReport {
        map,
        coarse,
        refined,
        warnings,
    })
}
