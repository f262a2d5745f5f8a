//! Static maps from stack current to flow and pressure set-points.

mod lut;

pub use lut::{
    generate_pressure_lut, ClosedFormSteadyState, LutGrid, LutReport, SteadyStateEfficiency,
};

use crate::plant::PlantParams;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

/// Target oxygen excess ratio built into the flow map.
pub const LAMBDA_TARGET: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SetpointError {
    #[error("LUT breakpoints must be strictly increasing")]
    UnsortedBreakpoints,
    #[error("LUT pressure {0} Pa outside [ambient, 3·ambient]")]
    PressureOutOfRange(f64),
    #[error("LUT needs at least one breakpoint with matching values")]
    Empty,
    #[error("no feasible pressure at any grid current")]
    NoFeasiblePoint,
    #[error("LUT CSV line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Flow gain of the feed-forward map, kg/(s·A).
pub fn flow_gain(p: &PlantParams) -> f64 {
    (1.0 + p.omega_atm) / p.x_o2_atm * p.o2_per_amp() * LAMBDA_TARGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointMap {
    pub flow_gain: f64,
    pub breakpoints: Vec<f64>,
    pub pressures: Vec<f64>,
}

impl SetpointMap {
    pub fn new(flow_gain: f64, breakpoints: Vec<f64>, pressures: Vec<f64>, p_atm: f64) -> Result<Self, SetpointError> {
        if breakpoints.is_empty() || breakpoints.len() != pressures.len() {
            return Err(SetpointError::Empty);
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SetpointError::UnsortedBreakpoints);
        }
        if let Some(&bad) = pressures.iter().find(|&&v| !(v >= p_atm && v <= 3.0 * p_atm)) {
            return Err(SetpointError::PressureOutOfRange(bad));
        }
        Ok(Self {
            flow_gain,
            breakpoints,
            pressures,
        })
    }

    pub fn flow_setpoint(&self, i_st: f64) -> f64 {
        self.flow_gain * i_st
    }

    /// Piecewise-linear interpolation, clamped at the table ends.
    pub fn pressure_setpoint(&self, i_st: f64) -> f64 {
        interp_clamped(&self.breakpoints, &self.pressures, i_st)
    }

    /// Slope of the pressure map at `i_st`, Pa/A (zero outside the table).
    pub fn pressure_slope(&self, i_st: f64) -> f64 {
        let b = &self.breakpoints;
        if b.len() < 2 || i_st < b[0] || i_st > b[b.len() - 1] {
            return 0.0;
        }
        let k = b.partition_point(|&x| x <= i_st).clamp(1, b.len() - 1);
        (self.pressures[k] - self.pressures[k - 1]) / (b[k] - b[k - 1])
    }

    pub fn write_lut_csv<W: Write>(&self, w: W) -> Result<(), SetpointError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["I_st_A", "p_sm_Pa"]).map_err(csv_io)?;
        for (i, p) in self.breakpoints.iter().zip(&self.pressures) {
            wr.write_record([crate::io::fmt17(*i), crate::io::fmt17(*p)]).map_err(csv_io)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a LUT CSV and pairs it with the flow map of `params`.
    pub fn read_lut_csv<R: Read>(r: R, params: &PlantParams) -> Result<Self, SetpointError> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(|e| SetpointError::Parse { line: 1, msg: e.to_string() })?;
        if header.iter().collect::<Vec<_>>() != ["I_st_A", "p_sm_Pa"] {
            return Err(SetpointError::Parse {
                line: 1,
                msg: "expected header I_st_A,p_sm_Pa".into(),
            });
        }
        let (mut b, mut p) = (Vec::new(), Vec::new());
        for (k, rec) in rd.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| SetpointError::Parse { line, msg: e.to_string() })?;
            let num = |idx: usize| -> Result<f64, SetpointError> {
                rec.get(idx)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| SetpointError::Parse {
                        line,
                        msg: format!("column {} is not a number", idx + 1),
                    })
            };
            b.push(num(0)?);
            p.push(num(1)?);
        }
        Self::new(flow_gain(params), b, p, params.p_atm)
    }
}

fn csv_io(e: csv::Error) -> SetpointError {
    SetpointError::Io(std::io::Error::other(e))
}

pub(crate) fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}
