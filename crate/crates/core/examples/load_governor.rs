//! Step fixture with and without the scalar load governor on stack current.
use airpath::plant::PlantParams;
use airpath::setpoints::{generate_pressure_lut, ClosedFormSteadyState, LutGrid};
use airpath::sim::{compute_metrics, run_closed_loop, ControllerKind, GovernorKind, Profile, Scenario, System, SystemConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = PlantParams::default();
    let lut = generate_pressure_lut(&ClosedFormSteadyState { params: params.clone() }, &LutGrid::default(), &params)?;
    let sys = System::new(params, lut.map, SystemConfig::default())?;
    let none = run_closed_loop(&sys, &Scenario::new("steps", Profile::step_fixture(), GovernorKind::None, ControllerKind::Mimo))?;
    let load = run_closed_loop(&sys, &Scenario::new("steps", Profile::step_fixture(), GovernorKind::Load, ControllerKind::Mimo))?;
    for (name, tr) in [("ungoverned", &none), ("load governor", &load)] {
        let m = compute_metrics(tr, Some(&none), sys.config.oer_current_threshold);
        println!("{name:>14}: worst OER {:.4} at {:.2} s, net power MAPE {:.3}%", m.worst_oer, m.worst_oer_time_s, m.mape_pct);
    }
    // the governor holds current back while the airpath catches up
    println!("{:>6} {:>8} {:>8} {:>6} {:>7}", "t", "I_des", "I_gov", "kappa", "lambda");
    for r in load.rows.iter().filter(|r| (r.t % 4.0) < 1.0 && ((r.t * 50.0).round() as i64) % 10 == 0) {
        println!("{:>6.2} {:>8.2} {:>8.2} {:>6.3} {:>7.4}", r.t, r.i_des, r.i_st, r.kappa_current, r.lambda_o2);
    }
    Ok(())
}
