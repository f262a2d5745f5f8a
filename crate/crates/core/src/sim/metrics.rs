use super::trace::SimTrace;
use serde::{Deserialize, Serialize};

/// Run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub worst_oer: f64,
    pub worst_oer_time_s: f64,
    /// Mean absolute percent error of net power against the request or reference run.
    pub mape_pct: f64,
    pub mape_samples: usize,
    /// Samples skipped because the request was zero or missing.
    pub mape_excluded: usize,
    pub h2_grams: f64,
    pub duration_s: f64,
    /// Simulated time per wall-clock second; absent for traces read from disk.
    pub normalized_exec_time: Option<f64>,
}

/// Metrics of `trace`. Net power is compared with `reference`'s net power when given,
/// otherwise with the trace's own request column.
pub fn compute_metrics(trace: &SimTrace, reference: Option<&SimTrace>, oer_current_threshold: f64) -> Metrics {
    let (mut worst, mut worst_t) = (f64::INFINITY, f64::NAN);
    for r in &trace.rows {
        if r.i_st > oer_current_threshold && r.lambda_o2 < worst {
            worst = r.lambda_o2;
            worst_t = r.t;
        }
    }
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for (k, r) in trace.rows.iter().enumerate() {
        let target = match reference {
            Some(rf) => rf.rows.get(k).map_or(f64::NAN, |x| x.p_net),
            None => r.p_request,
        };
        if !target.is_finite() || target == 0.0 {
            skipped += 1;
            continue;
        }
        sum += ((r.p_net - target) / target).abs();
        n += 1;
    }
    let h2: f64 = trace.rows.iter().map(|r| r.w_h2).sum::<f64>() * trace.ts * 1e3;
    let duration = trace.rows.len() as f64 * trace.ts;
    Metrics {
        worst_oer: worst,
        worst_oer_time_s: worst_t,
        mape_pct: if n > 0 { 100.0 * sum / n as f64 } else { f64::NAN },
        mape_samples: n,
        mape_excluded: skipped,
        h2_grams: h2,
        duration_s: duration,
        normalized_exec_time: trace.wall_time.filter(|&w| w > 0.0).map(|w| duration / w),
    }
}

/// Time from `t0` until `y` first covers 90 % of its change towards `target`.
pub fn rise_time_90(t: &[f64], y: &[f64], t0: f64, target: f64) -> Option<f64> {
    let k0 = t.iter().position(|&ti| ti >= t0)?;
    let start = y[k0.saturating_sub(1)];
    let span = target - start;
    if span == 0.0 {
        return Some(0.0);
    }
    (k0..t.len())
        .find(|&k| (y[k] - start) / span >= 0.9)
        .map(|k| t[k] - t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantParams;
    use crate::sim::trace::TraceRow;

    fn row(t: f64, i: f64, p_net: f64, req: f64, lambda: f64) -> TraceRow {
        let h2 = PlantParams::default().h2_per_amp();
        let nan = f64::NAN;
        TraceRow {
            t,
            i_des: i,
            w_ref: nan,
            p_ref: nan,
            w_gov: nan,
            p_gov: nan,
            i_st: i,
            v_cm: nan,
            u_om: nan,
            p_ca: nan,
            omega_cp: nan,
            p_sm: nan,
            w_cp: nan,
            lambda_o2: lambda,
            p_net,
            p_request: req,
            w_h2: h2 * i,
            kappa_flow: nan,
            kappa_pressure: nan,
            kappa_current: nan,
            margin: nan,
            flags: 0,
        }
    }

    #[test]
    fn hydrogen_for_constant_current() {
        let ts = 0.02;
        let rows = (0..5000).map(|k| row(k as f64 * ts, 100.0, 1.0, 1.0, 2.0)).collect();
        let m = compute_metrics(&SimTrace { ts, rows, wall_time: None }, None, 10.0);
        assert!((m.h2_grams - 39.8).abs() < 0.05, "{}", m.h2_grams);
        assert_eq!(m.mape_pct, 0.0);
    }

    #[test]
    fn mape_and_worst_oer() {
        let rows = vec![
            row(0.0, 100.0, 90.0, 100.0, 2.0),
            row(0.02, 100.0, 110.0, 100.0, 1.7),
            row(0.04, 5.0, 0.0, 0.0, 0.5),
        ];
        let m = compute_metrics(&SimTrace { ts: 0.02, rows, wall_time: None }, None, 10.0);
        assert!((m.mape_pct - 10.0).abs() < 1e-12);
        assert_eq!((m.mape_samples, m.mape_excluded), (2, 1));
        assert_eq!(m.worst_oer, 1.7);
    }

    #[test]
    fn rise_time_of_a_ramp() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&ti| if ti < 1.0 { 0.0 } else { ((ti - 1.0) / 2.0).min(1.0) }).collect();
        let r = rise_time_90(&t, &y, 1.0, 1.0).unwrap();
        assert!((r - 1.8).abs() < 0.11);
    }
}
