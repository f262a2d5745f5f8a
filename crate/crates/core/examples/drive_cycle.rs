//! Power-request drive cycle through the power loop, governed and not, with
//! metrics and the trace written as CSV.
//!
//! cargo run --release --example drive_cycle -- [cycle.csv] [trace_out.csv]
use airpath::plant::PlantParams;
use airpath::setpoints::{generate_pressure_lut, ClosedFormSteadyState, LutGrid};
use airpath::sim::{compute_metrics, ingest_drive_cycle, run_closed_loop, ControllerKind, GovernorKind, Scenario, System, SystemConfig};
use std::fs::File;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/high_load.csv").into());
    let out = args.next();
    let profile = ingest_drive_cycle(File::open(&path)?)?;

    let params = PlantParams::default();
    let lut = generate_pressure_lut(&ClosedFormSteadyState { params: params.clone() }, &LutGrid::default(), &params)?;
    let sys = System::new(params, lut.map, SystemConfig::default())?;
    let pm = sys.power_model()?;
    println!(
        "power model at {:.0} A: {:.1} W/A, tau {:.3} s (nrmse {:.3}); rated {:.0} W",
        pm.current, pm.fit.gain, pm.fit.tau, pm.fit.nrmse, pm.rated_power
    );

    let mut keep = None;
    for (g, c) in [
        (GovernorKind::None, ControllerKind::Siso),
        (GovernorKind::None, ControllerKind::Mimo),
        (GovernorKind::Load, ControllerKind::Mimo),
        (GovernorKind::CcRg, ControllerKind::Mimo),
    ] {
        let tr = run_closed_loop(&sys, &Scenario::new("cycle", profile.clone(), g, c))?;
        let m = compute_metrics(&tr, None, sys.config.oer_current_threshold);
        println!(
            "{c:?}/{g:?}: worst OER {:.4} at {:.1} s, MAPE {:.2}% over {} samples, H2 {:.2} g, {:.0}x real time",
            m.worst_oer,
            m.worst_oer_time_s,
            m.mape_pct,
            m.mape_samples,
            m.h2_grams,
            m.normalized_exec_time.unwrap_or(f64::NAN)
        );
        if g == GovernorKind::CcRg {
            keep = Some(tr);
        }
    }
    if let (Some(path), Some(tr)) = (out, keep) {
        tr.write_csv(File::create(&path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
