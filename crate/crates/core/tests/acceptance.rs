//! Acceptance suite. Runs every criterion, prints one line each, exits non-zero on any failure.

use airpath::analysis::{imc_loop_margins, rga_of};
use airpath::imc::{design_controller, design_filter, ImcConfig};
use airpath::lti::{logspace, StateSpaceModel};
use airpath::mas::{build_mas, build_mas_feedthrough, select_horizon, ConstraintSet, OperatingBox, HORIZON_CAP};
use airpath::plant::{design_plant, linearize, PlantInputs, PlantParams};
use airpath::rg::{cs_bounds, cs_rg_step, cs_tolerance, oer_constraint_rows, FLOW_SCALE, PRESSURE_SCALE};
use airpath::setpoints::{generate_pressure_lut, ClosedFormSteadyState, LutGrid, SteadyStateEfficiency};
use airpath::sim::{
    compute_metrics, ingest_drive_cycle, rise_time_90, run_closed_loop, ControllerKind, GovernorKind, Metrics, Profile,
    Scenario, SimTrace, System, SystemConfig, STEP_DWELL, STEP_LEVELS,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::sync::OnceLock;
use std::time::Instant;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn system() -> &'static System {
    static SYS: OnceLock<System> = OnceLock::new();
    SYS.get_or_init(|| {
        let params = PlantParams::default();
        let lut = generate_pressure_lut(&ClosedFormSteadyState { params: params.clone() }, &LutGrid::default(), &params)
            .expect("lut");
        System::new(params, lut.map, SystemConfig::default()).expect("system")
    })
}

fn cycle(name: &str) -> Profile {
    let path = format!("{}/data/{name}.csv", env!("CARGO_MANIFEST_DIR"));
    ingest_drive_cycle(File::open(path).expect("cycle file")).expect("cycle")
}

fn run(name: &str, profile: Profile, g: GovernorKind, c: ControllerKind) -> SimTrace {
    run_closed_loop(system(), &Scenario::new(name, profile, g, c)).expect("simulation")
}

/// Times at which the step fixture changes level, with the levels before and after.
fn step_edges() -> Vec<(f64, f64, f64)> {
    (1..STEP_LEVELS.len()).map(|k| (k as f64 * STEP_DWELL, STEP_LEVELS[k - 1], STEP_LEVELS[k])).collect()
}

fn index_at(tr: &SimTrace, t: f64) -> usize {
    tr.rows.iter().position(|r| r.t >= t - 1e-9).unwrap_or(tr.rows.len() - 1)
}

// ---------------------------------------------------------------------------

fn design_plant_fidelity() -> Outcome {
    let g = design_plant();
    let published: [[(&[&str], &[&str]); 2]; 2] = [
        [(&["20.26", "1171", "1061"], &["1", "80.13", "1327", "2813"]), (&["23267", "170261"], &["1", "80.13", "1327", "2813"])],
        [(&["1.024", "40.38"], &["1", "80.13", "1327", "2813"]), (&["-174.6", "-2902"], &["1", "80.13", "1327", "2813"])],
    ];
    let text = |c: &[f64]| c.iter().map(|v| v.to_string()).collect::<Vec<_>>();
    for (i, row) in published.iter().enumerate() {
        for (j, (num, den)) in row.iter().enumerate() {
            let e = g.entry(i, j);
            if text(e.num().coeffs()) != *num || text(e.den().coeffs()) != *den {
                return Err(format!("entry ({},{}) num {:?} den {:?}", i + 1, j + 1, e.num().coeffs(), e.den().coeffs()));
            }
        }
    }
    Ok("all four entries match digit for digit".into())
}

/// Hand evaluation of the published plant and its RGA, no library transfer functions.
fn rga11_by_hand(w: f64) -> Complex64 {
    let s = Complex64::new(0.0, w);
    let den = s * s * s + 80.13 * s * s + 1327.0 * s + 2813.0;
    let g11 = (20.26 * s * s + 1171.0 * s + 1061.0) / den;
    let g12 = (23267.0 * s + 170261.0) / den;
    let g21 = (1.024 * s + 40.38) / den;
    let g22 = (-174.6 * s - 2902.0) / den;
    g11 * g22 / (g11 * g22 - g12 * g21)
}

fn rga_structure() -> Outcome {
    let g = design_plant();
    let mut worst = 0.0_f64;
    for w in logspace(1e-2, 1e4, 50).into_iter().chain([0.0, 100.0]) {
        let r = rga_of(&g.freq_response(w).map_err(|e| e.to_string())?, w).map_err(|e| e.to_string())?;
        worst = worst.max((r[(0, 0)] - rga11_by_hand(w)).norm());
    }
    let dc = rga11_by_hand(0.0).norm();
    let hf = rga11_by_hand(100.0).norm();
    ensure(
        (dc - 0.309).abs() <= 0.005 && hf > 0.5 && worst < 1e-9,
        format!("|R11(0)| = {dc:.4}, |R11(j100)| = {hf:.4}, library vs hand {worst:.1e}"),
    )
}

fn imc_nominal_identity() -> Outcome {
    let f = design_filter(&ImcConfig::default()).map_err(|e| e.to_string())?;
    let d = design_controller(&design_plant(), &f).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for w in logspace(1e-2, 1e3, 20) {
        let t = d.nominal_complementary(w).map_err(|e| e.to_string())?;
        let fw = f.freq_response(w).map_err(|e| e.to_string())?;
        worst = worst.max((t - fw).iter().map(|c| c.norm()).fold(0.0, f64::max));
    }
    let dc = d.nominal_complementary(0.0).map_err(|e| e.to_string())?;
    let dc_err = (dc - DMatrix::<Complex64>::identity(2, 2)).iter().map(|c| c.norm()).fold(0.0, f64::max);
    ensure(
        worst <= 1e-6 && dc_err <= 1e-9,
        format!("max |T - F| over 20 frequencies {worst:.1e}, |T(0) - I| {dc_err:.1e}"),
    )
}

fn imc_on_nonlinear_plant() -> Outcome {
    let tr = run("steps", Profile::step_fixture(), GovernorKind::None, ControllerKind::Mimo);
    let t = tr.times();
    let mut rise = Vec::new();
    let mut worst_settle = 0.0_f64;
    let mut worst_decay = 0.0_f64;
    let channels: [(&str, fn(&airpath::sim::TraceRow) -> (f64, f64)); 2] =
        [("flow", |r| (r.w_cp, r.w_ref)), ("pressure", |r| (r.p_sm, r.p_ref))];
    for (name, pick) in channels {
        let y: Vec<f64> = tr.rows.iter().map(|r| pick(r).0).collect();
        for (t0, _, _) in step_edges() {
            let k0 = index_at(&tr, t0);
            let k1 = index_at(&tr, t0 + STEP_DWELL) - 1;
            let target = pick(&tr.rows[k0 + 1]).1;
            let tr90 = rise_time_90(&t, &y, t0, target).ok_or(format!("{name} never reached 90% after {t0} s"))?;
            rise.push((name, t0, tr90));
            // last second of the dwell within 2 %
            let k_last = index_at(&tr, t0 + STEP_DWELL - 1.0);
            for k in k_last..=k1 {
                worst_settle = worst_settle.max((y[k] - target).abs() / target.abs());
            }
            // derivative envelope decays: last second against the whole dwell
            let dy: Vec<f64> = (k0 + 1..=k1).map(|k| (y[k] - y[k - 1]).abs()).collect();
            let peak = dy.iter().cloned().fold(0.0, f64::max);
            let tail = dy[dy.len() - (k1 - k_last)..].iter().cloned().fold(0.0, f64::max);
            if peak > 0.0 {
                worst_decay = worst_decay.max(tail / peak);
            }
        }
    }
    let (lo, hi) = rise.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), r| (a.min(r.2), b.max(r.2)));
    let out_of_band: Vec<_> = rise.iter().filter(|r| !(0.5..=3.0).contains(&r.2)).collect();
    ensure(
        out_of_band.is_empty() && worst_settle <= 0.02 && worst_decay < 0.1,
        format!(
            "90% rise {lo:.2}-{hi:.2} s, worst error in last second {:.3}%, tail/peak derivative {worst_decay:.3}{}",
            100.0 * worst_settle,
            if out_of_band.is_empty() { String::new() } else { format!(", out of band: {out_of_band:?}") }
        ),
    )
}

fn disk_margins() -> Outcome {
    let sys = system();
    let lin = linearize(&sys.params, PlantInputs::new(180.0, 0.45, 190.0)).map_err(|e| e.to_string())?;
    let m = imc_loop_margins(&lin.design_channels(), &sys.imc, 0.01).map_err(|e| e.to_string())?;
    let published = [(20.38, 79.07), (17.14, 74.17), (12.11, 62.15)];
    let got = [&m.channels[0], &m.channels[1], &m.all];
    let mut worst = 0.0_f64;
    for (d, (gm, pm)) in got.iter().zip(published) {
        worst = worst.max((d.gain_margin_db - gm).abs() / gm).max((d.phase_margin_deg - pm).abs() / pm);
    }
    let ordered = m.channels.iter().all(|c| m.all.alpha <= c.alpha);
    ensure(
        worst <= 0.25 && ordered,
        format!(
            "v_cm ±{:.2} dB/±{:.2}°, u_om ±{:.2} dB/±{:.2}°, all ±{:.2} dB/±{:.2}°; worst deviation {:.1}%, multiloop <= loop-at-a-time {ordered}",
            m.channels[0].gain_margin_db,
            m.channels[0].phase_margin_deg,
            m.channels[1].gain_margin_db,
            m.channels[1].phase_margin_deg,
            m.all.gain_margin_db,
            m.all.phase_margin_deg,
            100.0 * worst
        ),
    )
}

fn random_stable(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpaceModel {
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.7..0.7));
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let d = DMatrix::from_fn(p, m, |_, _| rng.random_range(-0.2..0.2));
        let s = StateSpaceModel::new(a, b, c, d, 0.02).unwrap();
        if s.spectral_radius() < 0.95 {
            return s;
        }
    }
}

fn random_constraints(rng: &mut ChaCha8Rng, p: usize) -> ConstraintSet {
    let q = rng.random_range(1..=3);
    let s_mat = DMatrix::from_fn(q, p, |_, _| rng.random_range(-1.0..1.0));
    let s = DVector::from_fn(q, |_, _| rng.random_range(0.5..2.0));
    ConstraintSet::new(s_mat, s).unwrap()
}

/// Constraint check by direct simulation with the input held constant.
fn trajectory_admissible(model: &StateSpaceModel, c: &ConstraintSet, eps: f64, x0: &DVector<f64>, v: f64, steps: usize) -> bool {
    let u = DVector::from_element(1, v);
    let n = model.order();
    let xs = (DMatrix::identity(n, n) - &model.a).lu().solve(&(&model.b * &u)).unwrap();
    let yss = &model.c * xs + &model.d * &u;
    if (&c.s * (1.0 - eps) - &c.s_mat * yss).min() < 0.0 {
        return false;
    }
    let mut x = x0.clone();
    for _ in 0..=steps {
        let (xn, y) = model.step(&x, &u);
        if c.margin(&y) < 0.0 {
            return false;
        }
        x = xn;
    }
    true
}

fn mas_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps = 0.01;
    let (mut disagreements, mut inside) = (0, 0);
    for _ in 0..20 {
        let n = rng.random_range(1..=4);
        let p = rng.random_range(1..=2);
        let model = random_stable(&mut rng, n, 1, p);
        let c = random_constraints(&mut rng, p);
        let bx = OperatingBox::symmetric(n, 1, 4.0, 4.0);
        let jstar = select_horizon(&model, &c, eps, &bx, HORIZON_CAP).map_err(|e| e.to_string())?.jstar;
        let mas = build_mas(&model, &c, eps, jstar).map_err(|e| e.to_string())?;
        for _ in 0..10_000 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
            let v = rng.random_range(-4.0..4.0);
            let member = mas.contains(&x, v, &[]).0;
            inside += member as usize;
            if member != trajectory_admissible(&model, &c, eps, &x, v, 5 * jstar) {
                disagreements += 1;
            }
        }
    }
    ensure(
        disagreements == 0,
        format!("{disagreements} disagreements on 200000 points ({inside} inside)"),
    )
}

fn load_governor_linear_exactness() -> Outcome {
    let sys = system();
    let pm = &sys.prediction;
    let mut gov = sys.load_governor().map_err(|e| e.to_string())?;
    let c = oer_constraint_rows(sys.config.governor.lambda_min, pm.nominal_oer_outputs()).map_err(|e| e.to_string())?;
    // references the governor slaves to current, rebuilt from the maps
    let (p_off, p_slope) = sys.pressure_line();
    let i0 = pm.nominal_current();
    let [w0, p0] = pm.nominal_tracked();
    let refs = |i: f64| {
        DVector::from_vec(vec![
            sys.map.flow_gain * i * FLOW_SCALE - w0,
            (p_off + p_slope * i) * PRESSURE_SCALE - p0,
            i - i0,
        ])
    };
    let profile = Profile::step_fixture();
    let i_start = profile.value(0.0);
    gov.reset(i_start);
    let u0 = refs(i_start);
    let mut z = pm.equilibrium(&[u0[0], u0[1], u0[2]]);
    let ts = sys.config.ts;
    let ticks = (profile.natural_duration() / ts).round() as usize;
    let (mut worst, mut limited, mut not_maximal) = (f64::INFINITY, 0, 0);
    for k in 0..ticks {
        let v_prev = gov.current() - i0;
        let desired = profile.value(k as f64 * ts);
        let s = gov.step(&z, desired);
        let d = s.diagnostics;
        if d.kappa < 1.0 && !d.flagged {
            limited += 1;
            let r = desired - i0;
            let beyond = v_prev + (d.kappa + 1e-6) * (r - v_prev);
            if gov.mas.contains(&z, beyond, &[1.0]).0 {
                not_maximal += 1;
            }
        }
        let (zn, y) = pm.model.step(&z, &refs(s.current));
        worst = worst.min(c.margin(&y));
        z = zn;
    }
    ensure(
        worst >= -1e-9 && not_maximal == 0 && limited > 0,
        format!("worst OER row margin {worst:.3e} g/s, {limited} limited ticks, {not_maximal} with slack beyond κ+1e-6"),
    )
}

fn load_governor_nonlinear() -> Outcome {
    let sys = system();
    let none = run("steps", Profile::step_fixture(), GovernorKind::None, ControllerKind::Mimo);
    let load = run("steps", Profile::step_fixture(), GovernorKind::Load, ControllerKind::Mimo);
    let th = sys.config.oer_current_threshold;
    let (mn, ml) = (compute_metrics(&none, None, th), compute_metrics(&load, None, th));
    let mut gap = 0.0_f64;
    for t0 in step_edges().into_iter().map(|e| e.0).chain([Profile::step_fixture().natural_duration()]) {
        let k = index_at(&load, t0) - 1;
        gap = gap.max((load.rows[k].i_st - none.rows[k].i_st).abs());
    }
    ensure(
        ml.worst_oer >= 1.8 - 0.05 && mn.worst_oer < 1.8 && gap <= 0.1,
        format!(
            "worst OER governed {:.4}, ungoverned {:.4}; largest end-of-dwell current gap {gap:.2e} A",
            ml.worst_oer, mn.worst_oer
        ),
    )
}

fn cs_interval() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let step = 1e-3;
    let grid: Vec<f64> = (0..=20_000).map(|i| -10.0 + i as f64 * step).collect();
    let (mut bad, mut empty, mut interior) = (Vec::new(), 0, 0);
    for case in 0..100 {
        let p = rng.random_range(1..=2);
        let model = random_stable(&mut rng, 3, 2, p);
        let c = random_constraints(&mut rng, p);
        let bx = OperatingBox::symmetric(3, 2, 1.0, 1.0);
        let jstar = select_horizon(&model, &c, 0.01, &bx, HORIZON_CAP).map_err(|e| e.to_string())?.jstar;
        let mas = build_mas_feedthrough(&model, 0, &c, 0.01, jstar).map_err(|e| e.to_string())?;
        let x = DVector::from_fn(3, |_, _| rng.random_range(-0.5..0.5));
        let w = [rng.random_range(-0.3..0.3)];
        let b = cs_bounds(&mas, &x, &w, cs_tolerance(&mas, 1e-9));
        let members: Vec<f64> = grid.iter().copied().filter(|&v| mas.contains(&x, v, &w).0).collect();
        let Some((&glo, &ghi)) = members.first().zip(members.last()) else {
            empty += 1;
            if b.is_feasible() && b.hi - b.lo >= step {
                bad.push(case);
            }
            continue;
        };
        let lo_ok = glo <= -10.0 || (glo - b.lo).abs() <= step;
        let hi_ok = ghi >= 10.0 || (ghi - b.hi).abs() <= step;
        let mid = 0.5 * (glo + ghi);
        if !(lo_ok && hi_ok) || cs_rg_step(b, mid, None).v != mid {
            bad.push(case);
        }
        interior += 1;
    }
    ensure(
        bad.is_empty(),
        format!("{interior} nonempty and {empty} empty cross-sections; mismatches {bad:?}"),
    )
}

struct Comparison {
    name: &'static str,
    none: Metrics,
    load: Metrics,
    ccrg: Metrics,
}

fn cc_rg_direction() -> Outcome {
    let sys = system();
    let th = sys.config.oer_current_threshold;
    let mut rows = Vec::new();
    let mut rise_wins = Vec::new();
    for name in ["steps", "high_load", "low_load"] {
        let profile = if name == "steps" { Profile::step_fixture() } else { cycle(name) };
        let none = run(name, profile.clone(), GovernorKind::None, ControllerKind::Mimo);
        let load = run(name, profile.clone(), GovernorKind::Load, ControllerKind::Mimo);
        let ccrg = run(name, profile, GovernorKind::CcRg, ControllerKind::Mimo);
        // MAPE of the step fixture is against the ungoverned net power; cycles track the request
        let reference = (name == "steps").then_some(&none);
        if name == "steps" {
            let t = load.times();
            for (t0, before, level) in step_edges() {
                if level <= before {
                    continue;
                }
                let il = load.column(|r| r.i_st);
                let ic = ccrg.column(|r| r.i_st);
                if let (Some(rl), Some(rc)) = (rise_time_90(&t, &il, t0, level), rise_time_90(&t, &ic, t0, level)) {
                    rise_wins.push((t0, rc, rl));
                }
            }
        }
        rows.push(Comparison {
            name,
            none: compute_metrics(&none, reference, th),
            load: compute_metrics(&load, reference, th),
            ccrg: compute_metrics(&ccrg, reference, th),
        });
    }
    let mut ok = true;
    let mut detail = Vec::new();
    for r in &rows {
        let oer = r.ccrg.worst_oer >= r.load.worst_oer && r.load.worst_oer >= r.none.worst_oer;
        let mape = r.ccrg.mape_pct <= r.load.mape_pct;
        ok &= oer && mape;
        detail.push(format!(
            "{}: OER {:.6}/{:.6}/{:.6} {} MAPE {:.3}%/{:.3}% {}",
            r.name,
            r.ccrg.worst_oer,
            r.load.worst_oer,
            r.none.worst_oer,
            if oer { "ok" } else { "VIOLATED" },
            r.ccrg.mape_pct,
            r.load.mape_pct,
            if mape { "ok" } else { "VIOLATED" },
        ));
    }
    let faster = rise_wins.iter().any(|&(_, rc, rl)| rc < rl);
    ok &= faster;
    let rises: Vec<String> = rise_wins.iter().map(|(t0, rc, rl)| format!("{t0} s {rc:.2}<{rl:.2}")).collect();
    detail.push(format!("current rise CC-RG<load [{}] {}", rises.join(", "), if faster { "ok" } else { "VIOLATED" }));
    ensure(ok, detail.join("; "))
}

fn lut_optimality() -> Outcome {
    let params = PlantParams::default();
    let eval = ClosedFormSteadyState { params: params.clone() };
    let rep = generate_pressure_lut(&eval, &LutGrid::default(), &params).map_err(|e| e.to_string())?;
    let mut losers = Vec::new();
    for (&i, &p) in rep.map.breakpoints.iter().zip(&rep.map.pressures) {
        let e = eval.efficiency(i, p).ok_or(format!("stored point {i} A, {p} Pa has no steady state"))?;
        for dp in [-2000.0, 2000.0] {
            if eval.efficiency(i, p + dp).is_some_and(|ep| ep > e) {
                losers.push((i, dp));
            }
        }
    }
    ensure(
        losers.is_empty(),
        format!("{} breakpoints checked at ±2 kPa; beaten at {losers:?}", rep.map.breakpoints.len()),
    )
}

fn efficiency_direction() -> Outcome {
    let th = system().config.oer_current_threshold;
    let profile = cycle("high_load");
    let mimo = compute_metrics(&run("high_load", profile.clone(), GovernorKind::None, ControllerKind::Mimo), None, th);
    let siso = compute_metrics(&run("high_load", profile, GovernorKind::None, ControllerKind::Siso), None, th);
    let saving = 100.0 * (siso.h2_grams - mimo.h2_grams) / siso.h2_grams;
    ensure(
        mimo.h2_grams < siso.h2_grams,
        format!("H2 MIMO {:.3} g, SISO {:.3} g, saving {saving:.2}%", mimo.h2_grams, siso.h2_grams),
    )
}

fn determinism() -> Outcome {
    let bytes = |name: &str, p: Profile, g| {
        let mut buf = Vec::new();
        run(name, p, g, ControllerKind::Mimo).write_csv(&mut buf).unwrap();
        buf
    };
    let mut checked = Vec::new();
    for (name, profile, g) in [
        ("steps", Profile::step_fixture(), GovernorKind::CcRg),
        ("aggressive", cycle("aggressive"), GovernorKind::Load),
    ] {
        let a = bytes(name, profile.clone(), g);
        let b = bytes(name, profile, g);
        if a != b {
            return Err(format!("{name} under {g:?} differs between runs"));
        }
        checked.push(format!("{name}/{g:?} {} bytes", a.len()));
    }
    Ok(format!("identical traces: {}", checked.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("design plant fidelity", design_plant_fidelity),
        ("RGA structure", rga_structure),
        ("IMC nominal identity", imc_nominal_identity),
        ("IMC on nonlinear plant", imc_on_nonlinear_plant),
        ("disk margins", disk_margins),
        ("MAS trajectory oracle", mas_oracle),
        ("load governor exactness, linear model", load_governor_linear_exactness),
        ("load governor on nonlinear plant", load_governor_nonlinear),
        ("cross-section interval", cs_interval),
        ("CC-RG direction", cc_rg_direction),
        ("pressure LUT optimality", lut_optimality),
        ("MIMO vs SISO hydrogen", efficiency_direction),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("[PASS] {:>2} {name} ({secs:.2} s): {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("[FAIL] {:>2} {name} ({secs:.2} s): {d}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
