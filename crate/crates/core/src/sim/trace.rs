use super::SimError;
use crate::io::fmt17;
use std::io::{BufRead, BufReader, Read, Write};

/// Trace CSV header, in column order.
pub const TRACE_COLUMNS: [&str; 22] = [
    "t_s",
    "i_des_a",
    "w_ref_kg_s",
    "p_ref_pa",
    "w_gov_kg_s",
    "p_gov_pa",
    "i_st_a",
    "v_cm_v",
    "u_om",
    "p_ca_pa",
    "omega_cp_rad_s",
    "p_sm_pa",
    "w_cp_kg_s",
    "lambda_o2",
    "p_net_w",
    "p_request_w",
    "w_h2_kg_s",
    "kappa_flow",
    "kappa_pressure",
    "kappa_current",
    "margin",
    "flags",
];

/// Flow stage hit an empty interval or the overshoot band.
pub const FLAG_FLOW: u32 = 1;
/// Pressure stage started outside the set.
pub const FLAG_PRESSURE: u32 = 2;
/// Current stage started outside the set.
pub const FLAG_CURRENT: u32 = 4;

/// One governor tick. Governor fields are NaN when no governor runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub i_des: f64,
    pub w_ref: f64,
    pub p_ref: f64,
    pub w_gov: f64,
    pub p_gov: f64,
    pub i_st: f64,
    pub v_cm: f64,
    pub u_om: f64,
    pub p_ca: f64,
    pub omega_cp: f64,
    pub p_sm: f64,
    pub w_cp: f64,
    pub lambda_o2: f64,
    pub p_net: f64,
    /// NaN for current-driven scenarios.
    pub p_request: f64,
    pub w_h2: f64,
    pub kappa_flow: f64,
    pub kappa_pressure: f64,
    pub kappa_current: f64,
    pub margin: f64,
    pub flags: u32,
}

impl TraceRow {
    fn values(&self) -> [f64; 21] {
        [
            self.t,
            self.i_des,
            self.w_ref,
            self.p_ref,
            self.w_gov,
            self.p_gov,
            self.i_st,
            self.v_cm,
            self.u_om,
            self.p_ca,
            self.omega_cp,
            self.p_sm,
            self.w_cp,
            self.lambda_o2,
            self.p_net,
            self.p_request,
            self.w_h2,
            self.kappa_flow,
            self.kappa_pressure,
            self.kappa_current,
            self.margin,
        ]
    }

    fn from_values(v: &[f64], flags: u32) -> Self {
        Self {
            t: v[0],
            i_des: v[1],
            w_ref: v[2],
            p_ref: v[3],
            w_gov: v[4],
            p_gov: v[5],
            i_st: v[6],
            v_cm: v[7],
            u_om: v[8],
            p_ca: v[9],
            omega_cp: v[10],
            p_sm: v[11],
            w_cp: v[12],
            lambda_o2: v[13],
            p_net: v[14],
            p_request: v[15],
            w_h2: v[16],
            kappa_flow: v[17],
            kappa_pressure: v[18],
            kappa_current: v[19],
            margin: v[20],
            flags,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub ts: f64,
    pub rows: Vec<TraceRow>,
    /// Wall-clock run time, s; not serialized.
    pub wall_time: Option<f64>,
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

impl SimTrace {
    pub fn column(&self, f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(|r| r.t)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", TRACE_COLUMNS.join(","))?;
        for r in &self.rows {
            let mut line: Vec<String> = r.values().iter().map(|&v| fmt17(v)).collect();
            line.push(r.flags.to_string());
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, SimError> {
        let mut lines = BufReader::new(r).lines();
        let io = |line: usize| move |e: std::io::Error| SimError::Parse { line, msg: e.to_string() };
        let header = lines.next().transpose().map_err(io(1))?.unwrap_or_default();
        if header.trim() != TRACE_COLUMNS.join(",") {
            return Err(SimError::Parse {
                line: 1,
                msg: "not a trace file (header mismatch)".into(),
            });
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let n = k + 2;
            let line = line.map_err(io(n))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != TRACE_COLUMNS.len() {
                return Err(SimError::Parse {
                    line: n,
                    msg: format!("expected {} fields, found {}", TRACE_COLUMNS.len(), fields.len()),
                });
            }
            let mut vals = Vec::with_capacity(21);
            for f in &fields[..21] {
                vals.push(parse_f64(f).ok_or_else(|| SimError::Parse {
                    line: n,
                    msg: format!("bad number `{f}`"),
                })?);
            }
            let flags = fields[21].parse().map_err(|_| SimError::Parse {
                line: n,
                msg: format!("bad flags `{}`", fields[21]),
            })?;
            rows.push(TraceRow::from_values(&vals, flags));
        }
        let ts = if rows.len() > 1 { rows[1].t - rows[0].t } else { 0.0 };
        Ok(Self {
            ts,
            rows,
            wall_time: None,
        })
    }

    /// Long-format CSV (`t_s,series,value`) for one figure panel:
    /// `oer`, `flow`, `pressure`, `actuators`, `current` or `power`.
    pub fn write_tidy<W: Write>(&self, panel: &str, mut w: W) -> Result<(), SimError> {
        let series: Vec<(&str, fn(&TraceRow) -> f64)> = match panel {
            "oer" => vec![("lambda_o2", |r| r.lambda_o2)],
            "flow" => vec![("w_cp_kg_s", |r| r.w_cp), ("w_ref_kg_s", |r| r.w_ref), ("w_gov_kg_s", |r| r.w_gov)],
            "pressure" => vec![("p_sm_pa", |r| r.p_sm), ("p_ref_pa", |r| r.p_ref), ("p_gov_pa", |r| r.p_gov)],
            "actuators" => vec![("v_cm_v", |r| r.v_cm), ("u_om", |r| r.u_om)],
            "current" => vec![("i_st_a", |r| r.i_st), ("i_des_a", |r| r.i_des)],
            "power" => vec![("p_net_w", |r| r.p_net), ("p_request_w", |r| r.p_request)],
            other => return Err(SimError::Config(format!("unknown plot panel `{other}`"))),
        };
        let io = |e: std::io::Error| SimError::Config(e.to_string());
        writeln!(w, "t_s,series,value").map_err(io)?;
        for (name, f) in &series {
            for r in &self.rows {
                writeln!(w, "{},{},{}", fmt17(r.t), name, fmt17(f(r))).map_err(io)?;
            }
        }
        Ok(())
    }
}

pub const PLOT_PANELS: [&str; 6] = ["oer", "flow", "pressure", "actuators", "current", "power"];
