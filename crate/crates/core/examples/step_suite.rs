//! Step fixture and shipped drive cycles under each governor, with metrics.
use airpath::plant::PlantParams;
use airpath::setpoints::{generate_pressure_lut, ClosedFormSteadyState, LutGrid};
use airpath::sim::{
    compute_metrics, ingest_drive_cycle, run_closed_loop, ControllerKind, GovernorKind, Profile, Scenario, System,
    SystemConfig,
};
use std::fs::File;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = PlantParams::default();
    let lut = generate_pressure_lut(&ClosedFormSteadyState { params: params.clone() }, &LutGrid::default(), &params)?;
    let sys = System::new(params, lut.map, SystemConfig::default())?;
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let mut profiles = vec![("steps".to_string(), Profile::step_fixture())];
    for name in ["high_load", "low_load", "aggressive"] {
        profiles.push((name.into(), ingest_drive_cycle(File::open(format!("{data}/{name}.csv"))?)?));
    }
    for (name, profile) in profiles {
        let mut none = None;
        for (g, c) in [
            (GovernorKind::None, ControllerKind::Mimo),
            (GovernorKind::Load, ControllerKind::Mimo),
            (GovernorKind::CcRg, ControllerKind::Mimo),
            (GovernorKind::None, ControllerKind::Siso),
        ] {
            let sc = Scenario::new(&name, profile.clone(), g, c);
            let tr = run_closed_loop(&sys, &sc)?;
            let reference = if matches!(profile, Profile::Current(_)) { none.as_ref() } else { None };
            let m = compute_metrics(&tr, reference, 10.0);
            println!(
                "{name:>10} {g:?}/{c:?}: worst OER {:.6} at {:.2}s, MAPE {:.3}%, H2 {:.3} g, speed {:.0}x",
                m.worst_oer,
                m.worst_oer_time_s,
                m.mape_pct,
                m.h2_grams,
                m.normalized_exec_time.unwrap_or(0.0)
            );
            if g == GovernorKind::None && c == ControllerKind::Mimo {
                none = Some(tr);
            }
        }
    }
    Ok(())
}
