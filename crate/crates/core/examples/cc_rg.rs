//! Cascaded constraint reference governor on the step fixture: flow on the
//! admissible cross-section, then pressure and current by κ updates.
use airpath::plant::PlantParams;
use airpath::setpoints::{generate_pressure_lut, ClosedFormSteadyState, LutGrid};
use airpath::sim::{
    compute_metrics, rise_time_90, run_closed_loop, ControllerKind, GovernorKind, Profile, Scenario, System, SystemConfig,
    FLAG_CURRENT, FLAG_FLOW, FLAG_PRESSURE,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = PlantParams::default();
    let lut = generate_pressure_lut(&ClosedFormSteadyState { params: params.clone() }, &LutGrid::default(), &params)?;
    let sys = System::new(params, lut.map, SystemConfig::default())?;
    let sc = |g| Scenario::new("steps", Profile::step_fixture(), g, ControllerKind::Mimo);
    let none = run_closed_loop(&sys, &sc(GovernorKind::None))?;
    let load = run_closed_loop(&sys, &sc(GovernorKind::Load))?;
    let ccrg = run_closed_loop(&sys, &sc(GovernorKind::CcRg))?;

    let th = sys.config.oer_current_threshold;
    for (name, tr) in [("load", &load), ("cc-rg", &ccrg)] {
        let m = compute_metrics(tr, Some(&none), th);
        let t = tr.times();
        let i = tr.column(|r| r.i_st);
        let rise: Vec<String> = [(4.0, 140.0), (8.0, 180.0), (12.0, 212.5)]
            .iter()
            .map(|&(t0, lvl)| format!("{:.2}", rise_time_90(&t, &i, t0, lvl).unwrap_or(f64::NAN)))
            .collect();
        println!(
            "{name:>6}: worst OER {:.4}, MAPE {:.3}%, current rise times {} s",
            m.worst_oer,
            m.mape_pct,
            rise.join(" / ")
        );
    }
    let count = |f| ccrg.rows.iter().filter(|r| r.flags & f != 0).count();
    println!(
        "flagged ticks: flow {}, pressure {}, current {}",
        count(FLAG_FLOW),
        count(FLAG_PRESSURE),
        count(FLAG_CURRENT)
    );
    let limited = ccrg.rows.iter().filter(|r| r.kappa_current < 1.0).count();
    println!("current held back on {limited} of {} ticks", ccrg.rows.len());
    Ok(())
}
