use super::{check_model, steady_gain, ConstraintSet, MasError, PredictionRows};
use crate::lti::StateSpaceModel;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const HORIZON_CAP: usize = 200;
/// Number of future blocks that must be implied before the horizon is accepted.
pub const HORIZON_LOOKAHEAD: usize = 10;

/// Bounds on states and inputs used to test row redundancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingBox {
    pub x: Vec<(f64, f64)>,
    pub u: Vec<(f64, f64)>,
}

impl OperatingBox {
    pub fn symmetric(n: usize, m: usize, x_half: f64, u_half: f64) -> Self {
        Self {
            x: vec![(-x_half, x_half); n],
            u: vec![(-u_half, u_half); m],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonReport {
    pub jstar: usize,
    /// True when the cap was hit before the lookahead rows became redundant.
    pub capped: bool,
    pub linear_programs: usize,
}

struct Row {
    coef: Vec<f64>,
    rhs: f64,
}

fn normalized(hx: &[f64], hu: &[f64], rhs: f64) -> Row {
    let coef: Vec<f64> = hx.iter().chain(hu).copied().collect();
    let norm = coef.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Row { coef, rhs };
    }
    Row {
        coef: coef.iter().map(|v| v / norm).collect(),
        rhs: rhs / norm,
    }
}

fn block_rows(hx: &DMatrix<f64>, hu: &DMatrix<f64>, rhs: &DVector<f64>) -> Vec<Row> {
    (0..rhs.len())
        .map(|i| {
            let x: Vec<f64> = hx.row(i).iter().copied().collect();
            let u: Vec<f64> = hu.row(i).iter().copied().collect();
            normalized(&x, &u, rhs[i])
        })
        .collect()
}

fn row_max(rows: &[Row], bx: &OperatingBox, obj: &[f64]) -> Result<f64, MasError> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = bx.x.iter().chain(&bx.u).zip(obj).map(|(&b, &c)| lp.add_var(c, b)).collect();
    for r in rows {
        let expr: Vec<_> = vars.iter().copied().zip(r.coef.iter().copied()).filter(|(_, c)| *c != 0.0).collect();
        if expr.is_empty() {
            continue;
        }
        lp.add_constraint(expr.as_slice(), ComparisonOp::Le, r.rhs);
    }
    lp.solve().map(|s| s.objective()).map_err(|e| MasError::Lp(e.to_string()))
}

/// Smallest horizon after which the next [`HORIZON_LOOKAHEAD`] prediction blocks are
/// implied by the earlier rows inside `bx`, capped at `cap`.
pub fn select_horizon(
    model: &StateSpaceModel,
    c: &ConstraintSet,
    eps: f64,
    bx: &OperatingBox,
    cap: usize,
) -> Result<HorizonReport, MasError> {
    check_model(model, c, eps, 1)?;
    if bx.x.len() != model.order() || bx.u.len() != model.inputs() {
        return Err(MasError::Shape("operating box does not match the model".into()));
    }
    let n = model.order();
    let steady = block_rows(&DMatrix::zeros(c.rows(), n), &(&c.s_mat * steady_gain(model)?), &(&c.s * (1.0 - eps)));
    let blocks: Vec<Vec<Row>> = PredictionRows::new(model, c)
        .take(cap + HORIZON_LOOKAHEAD + 1)
        .map(|(hx, hu)| block_rows(&hx, &hu, &c.s))
        .collect();
    let mut lps = 0;
    let mut j = 1;
    'grow: while j < cap {
        let active: Vec<&Row> = steady.iter().chain(blocks[..=j].iter().flatten()).collect();
        let owned: Vec<Row> = active
            .iter()
            .map(|r| Row {
                coef: r.coef.clone(),
                rhs: r.rhs,
            })
            .collect();
        for t in j + 1..=j + HORIZON_LOOKAHEAD {
            for r in &blocks[t] {
                if r.coef.iter().all(|&v| v == 0.0) {
                    continue;
                }
                lps += 1;
                let best = row_max(&owned, bx, &r.coef)?;
                if best > r.rhs + 1e-9 * (1.0 + r.rhs.abs()) {
                    j = t;
                    continue 'grow;
                }
            }
        }
        return Ok(HorizonReport {
            jstar: j,
            capped: false,
            linear_programs: lps,
        });
    }
    Ok(HorizonReport {
        jstar: cap,
        capped: true,
        linear_programs: lps,
    })
}
