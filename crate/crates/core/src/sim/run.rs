use super::system::{PowerLoopModel, System};
use super::trace::{SimTrace, TraceRow, FLAG_CURRENT, FLAG_FLOW, FLAG_PRESSURE};
use super::{ControllerKind, GovernorKind, Profile, Scenario, SimError};
use crate::imc::{design_power_imc, identify_first_order, ImcRuntime, InputLimits, PowerImc};
use crate::plant::{
    compressor_flow, net_power_and_efficiency, oer_outputs, rk4_step, steady_state_for_setpoints, SteadyPoint, PlantInputs,
    PlantState,
};
use crate::rg::{CascadeGovernor, LoadGovernor, FLOW_SCALE, PRESSURE_SCALE};
use nalgebra::DVector;
use std::time::Instant;

enum Governor {
    None,
    Load(LoadGovernor),
    Cascade(CascadeGovernor),
}

/// Shift moving a nonlinear steady state onto the prediction model's equilibrium for the
/// same references, so the governor sees transients rather than linearization error.
struct SteadyShift {
    scratch: ImcRuntime,
    key: Option<[f64; 3]>,
    last: DVector<f64>,
}

impl SteadyShift {
    fn new(sys: &System) -> Result<Self, SimError> {
        Ok(Self {
            scratch: ImcRuntime::new(sys.imc.clone())?,
            key: None,
            last: DVector::zeros(sys.prediction.model.order()),
        })
    }

    /// `refs` are absolute flow [kg/s], pressure [Pa], current [A]; `assumed` the deviations
    /// the governor's model attaches to them.
    fn offset(&mut self, sys: &System, refs: [f64; 3], assumed: [f64; 3]) -> DVector<f64> {
        if self.key == Some(refs) {
            return self.last.clone();
        }
        let op = sys.linearization.inputs;
        let pm = &sys.prediction;
        // keep the previous shift where the references have no steady state
        if let Some(sp) = reachable_steady(sys, refs) {
            let du = DVector::from_vec(vec![sp.inputs.v_cm - op.v_cm, sp.inputs.u_om - op.u_om]);
            if let Ok(zs) = pm.steady_augmented(&sp.state, &du, &mut self.scratch) {
                self.last = pm.equilibrium(&assumed) - zs;
            }
        }
        self.key = Some(refs);
        self.last.clone()
    }
}

/// Steady state for the references, or where the loop settles when the throttle saturates:
/// the pressure nearest the requested one, toward the map pressure, that admits a steady state.
fn reachable_steady(sys: &System, refs: [f64; 3]) -> Option<SteadyPoint> {
    let [w, p_req, i] = refs;
    let at = |ps: f64| steady_state_for_setpoints(&sys.params, i, w, ps).ok();
    if let Some(sp) = at(p_req) {
        return Some(sp);
    }
    let (mut bad, mut good) = (p_req, sys.map.pressure_setpoint(i));
    let mut best = at(good)?;
    for _ in 0..50 {
        let mid = 0.5 * (bad + good);
        match at(mid) {
            Some(sp) => {
                good = mid;
                best = sp;
            }
            None => bad = mid,
        }
    }
    Some(best)
}

struct PowerLoop {
    imc: PowerImc,
    model: PowerLoopModel,
}

/// Current whose steady net power equals `power`, by bisection over the current limits.
pub fn steady_power_current(sys: &System, power: f64) -> Result<f64, SimError> {
    let (mut lo, mut hi) = sys.config.limits.current;
    let f = |i: f64| sys.steady_power(i).map(|p| p - power);
    if f(lo)? >= 0.0 {
        return Ok(lo);
    }
    if f(hi)? <= 0.0 {
        return Ok(hi);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Steady state with the throttle fixed and the flow map tracked.
fn siso_steady(sys: &System, current: f64) -> Result<(PlantState, PlantInputs), SimError> {
    let p = &sys.params;
    let w = sys.map.flow_setpoint(current);
    let throttle = sys.config.siso_throttle;
    let u_at = |psm: f64| steady_state_for_setpoints(p, current, w, psm).map(|sp| sp.inputs.u_om);
    // throttle opening falls as the supply pressure rises
    let (mut lo, mut hi) = (p.p_atm * 1.02, p.p_atm * 3.0);
    while u_at(lo).is_err() && lo < hi {
        lo *= 1.01;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        match u_at(mid) {
            Ok(u) if u > throttle => lo = mid,
            _ => hi = mid,
        }
    }
    let sp = steady_state_for_setpoints(p, current, w, 0.5 * (lo + hi))?;
    Ok((sp.state, PlantInputs::new(sp.inputs.v_cm, throttle, current)))
}

fn flow_of(x: &PlantState, sys: &System) -> f64 {
    compressor_flow(x.omega_cp, x.p_sm, &sys.params).flow
}

/// Closed-loop run of one scenario on the nonlinear plant.
pub fn run_closed_loop(sys: &System, sc: &Scenario) -> Result<SimTrace, SimError> {
    sc.validate()?;
    if (sc.ts - sys.config.ts).abs() > 1e-12 {
        return Err(SimError::Config(format!(
            "scenario tick {} s differs from the controller period {} s",
            sc.ts, sys.config.ts
        )));
    }
    let started = Instant::now();
    let p = &sys.params;
    let lim = sys.config.limits;
    let op = sys.linearization.inputs;
    let pm = &sys.prediction;
    // controller deviations are about the design point, governor deviations about the prediction point
    let (w0, p0) = (
        sys.linearization.outputs[0] * FLOW_SCALE,
        sys.linearization.outputs[1] * PRESSURE_SCALE,
    );
    let w_pred = pm.nominal_tracked()[0];

    let mut power = match &sc.profile {
        Profile::Power(_) => {
            let model = sys.power_model()?;
            let imc = design_power_imc(&model.fit.transfer(), sys.config.power_tau, sc.ts)?;
            Some(PowerLoop { imc, model })
        }
        Profile::Current(_) => None,
    };
    let rated = match power {
        Some(ref pl) => pl.model.rated_power,
        None => f64::NAN,
    };
    let request_at = |t: f64| match &sc.profile {
        Profile::Power(_) => sc.profile.value(t) / 100.0 * rated,
        Profile::Current(_) => f64::NAN,
    };

    let i0 = match &sc.profile {
        Profile::Current(_) => sc.profile.value(0.0).clamp(lim.current.0, lim.current.1),
        Profile::Power(_) => steady_power_current(sys, request_at(0.0))?,
    };
    if let Some(pl) = power.as_mut() {
        pl.imc
            .runtime
            .initialize_steady(&DVector::from_element(1, i0 - pl.model.current))?;
    }

    let (mut x, init_u) = match sc.controller {
        ControllerKind::Mimo => {
            let sp = sys.steady_point(i0)?;
            (sp.state, sp.inputs)
        }
        ControllerKind::Siso => siso_steady(sys, i0)?,
    };
    let mut imc = match sc.controller {
        ControllerKind::Mimo => {
            let mut rt = ImcRuntime::new(sys.imc.clone())?;
            rt.initialize_steady(&DVector::from_vec(vec![init_u.v_cm - op.v_cm, init_u.u_om - op.u_om]))?;
            rt
        }
        ControllerKind::Siso => {
            let mut rt = ImcRuntime::new(sys.siso_imc.clone())?;
            rt.initialize_steady(&DVector::from_element(1, init_u.v_cm - op.v_cm))?;
            rt
        }
    };
    let limits = match sc.controller {
        ControllerKind::Mimo => InputLimits {
            lo: DVector::from_vec(vec![lim.v_cm.0 - op.v_cm, lim.u_om.0 - op.u_om]),
            hi: DVector::from_vec(vec![lim.v_cm.1 - op.v_cm, lim.u_om.1 - op.u_om]),
        },
        ControllerKind::Siso => InputLimits {
            lo: DVector::from_element(1, lim.v_cm.0 - op.v_cm),
            hi: DVector::from_element(1, lim.v_cm.1 - op.v_cm),
        },
    };
    let mut governor = match sc.governor {
        GovernorKind::None => Governor::None,
        GovernorKind::Load => {
            let mut g = sys.load_governor()?;
            g.reset(i0);
            Governor::Load(g)
        }
        GovernorKind::CcRg => {
            let mut g = sys.cascade_governor()?;
            g.reset(pm.to_deviation(sys.map.flow_setpoint(i0), sys.map.pressure_setpoint(i0), i0));
            Governor::Cascade(g)
        }
    };

    let mut shift = SteadyShift::new(sys)?;
    let h2_per_amp = p.h2_per_amp() * sys.config.sigma_h2;
    let mut u_prev = init_u;
    let mut rows = Vec::with_capacity(sc.ticks());
    let (m, delay_steps) = (sc.substeps(), sc.delay_steps());
    let dt = sc.ts / m as f64;
    for k in 0..sc.ticks() {
        let t = k as f64 * sc.ts;
        let request = request_at(t);
        let i_des = match power.as_mut() {
            Some(pl) => {
                let measured = net_power_and_efficiency(&x, &u_prev, p).0;
                let di = pl.imc.step(
                    request - pl.model.power,
                    measured - pl.model.power,
                    Some((lim.current.0 - pl.model.current, lim.current.1 - pl.model.current)),
                );
                pl.model.current + di
            }
            None => sc.profile.value(t).clamp(lim.current.0, lim.current.1),
        };
        let (w_ref, p_ref) = (sys.map.flow_setpoint(i_des), sys.map.pressure_setpoint(i_des));

        let nan = f64::NAN;
        let (mut kappas, mut margin, mut flags) = ([nan; 3], nan, 0u32);
        let (w_gov, p_gov, i_st) = match &mut governor {
            Governor::None => (w_ref, p_ref, i_des),
            Governor::Load(g) => {
                let [w0n, p0n] = pm.nominal_tracked();
                let held = g.current();
                let (wa, pa) = g.assumed_references(held);
                let off = shift.offset(
                    sys,
                    [wa / FLOW_SCALE, pa / PRESSURE_SCALE, held],
                    [wa - w0n, pa - p0n, held - pm.nominal_current()],
                );
                let s = g.step(&(pm.augmented_state(&x, &imc) + off), i_des);
                kappas[2] = s.diagnostics.kappa;
                margin = s.diagnostics.margin;
                if s.diagnostics.flagged {
                    flags |= FLAG_CURRENT;
                }
                (sys.map.flow_setpoint(s.current), sys.map.pressure_setpoint(s.current), s.current)
            }
            Governor::Cascade(g) => {
                let v = g.previous();
                let (w, pr, i) = pm.from_deviation(v);
                let off = shift.offset(sys, [w, pr, i], v);
                let s = g.step(&(pm.augmented_state(&x, &imc) + off), pm.to_deviation(w_ref, p_ref, i_des), w_pred);
                for (c, d) in s.diagnostics.iter().enumerate() {
                    kappas[c] = d.kappa;
                    if d.flagged {
                        flags |= [FLAG_FLOW, FLAG_PRESSURE, FLAG_CURRENT][c];
                    }
                }
                margin = s.diagnostics[2].margin;
                let (w, pr, i) = pm.from_deviation(s.v);
                (w, pr, i.clamp(lim.current.0, lim.current.1))
            }
        };

        let u_new = match sc.controller {
            ControllerKind::Mimo => {
                let r = DVector::from_vec(vec![w_gov * FLOW_SCALE - w0, p_gov * PRESSURE_SCALE - p0]);
                let y = DVector::from_vec(vec![flow_of(&x, sys) * FLOW_SCALE - w0, x.p_sm * PRESSURE_SCALE - p0]);
                let s = imc.step(&r, &y, Some(&limits));
                PlantInputs::new(op.v_cm + s.u_applied[0], op.u_om + s.u_applied[1], i_st)
            }
            ControllerKind::Siso => {
                let r = DVector::from_element(1, w_gov * FLOW_SCALE - w0);
                let y = DVector::from_element(1, flow_of(&x, sys) * FLOW_SCALE - w0);
                let s = imc.step(&r, &y, Some(&limits));
                PlantInputs::new(op.v_cm + s.u_applied[0], sys.config.siso_throttle, i_st)
            }
        };
        let u_start = if delay_steps > 0 {
            PlantInputs { i_st, ..u_prev }
        } else {
            u_new
        };
        let oer = oer_outputs(&x, &u_start, p);
        let p_net = net_power_and_efficiency(&x, &u_start, p).0;
        rows.push(TraceRow {
            t,
            i_des,
            w_ref,
            p_ref: if sc.controller == ControllerKind::Siso { nan } else { p_ref },
            w_gov,
            p_gov: if sc.controller == ControllerKind::Siso { nan } else { p_gov },
            i_st,
            v_cm: u_start.v_cm,
            u_om: u_start.u_om,
            p_ca: x.p_ca,
            omega_cp: x.omega_cp,
            p_sm: x.p_sm,
            w_cp: flow_of(&x, sys),
            lambda_o2: oer.lambda_o2.unwrap_or(nan),
            p_net,
            p_request: request,
            w_h2: h2_per_amp * i_st,
            kappa_flow: kappas[0],
            kappa_pressure: kappas[1],
            kappa_current: kappas[2],
            margin,
            flags,
        });
        for s in 0..m {
            let u = if s < delay_steps { PlantInputs { i_st, ..u_prev } } else { u_new };
            x = rk4_step(&x, &u, p, dt).map_err(|e| SimError::Plant {
                t: t + s as f64 * dt,
                source: e,
            })?;
        }
        u_prev = u_new;
    }
    Ok(SimTrace {
        ts: sc.ts,
        rows,
        wall_time: Some(started.elapsed().as_secs_f64()),
    })
}

/// Step test on the two-channel loop about the identification current; first-order fit of net power.
pub(crate) fn identify_power_model(sys: &System) -> Result<PowerLoopModel, SimError> {
    let i0 = sys.config.identification_current;
    let di = 10.0;
    let t_step = 1.0;
    let mut sc = Scenario::new(
        "power-identification",
        Profile::Current(vec![(0.0, i0), (t_step, i0 + di)]),
        GovernorKind::None,
        ControllerKind::Mimo,
    );
    sc.duration = t_step + 5.0;
    let trace = run_closed_loop(sys, &sc)?;
    let base = trace.rows.iter().rev().find(|r| r.t < t_step).map_or(f64::NAN, |r| r.p_net);
    let after: Vec<&TraceRow> = trace.rows.iter().filter(|r| r.t >= t_step).collect();
    let t: Vec<f64> = after.iter().map(|r| r.t - t_step + trace.ts).collect();
    let dy: Vec<f64> = after.iter().map(|r| r.p_net - base).collect();
    let fit = identify_first_order(&t, di, &dy);
    if !(fit.gain > 0.0 && fit.tau > 0.0) {
        return Err(crate::imc::ImcError::BadIdentifiedModel.into());
    }
    Ok(PowerLoopModel {
        fit,
        current: i0,
        power: base,
        rated_power: sys.rated_power()?,
    })
}
