//! Efficiency-optimal manifold pressure per stack current, and the flow map.
use airpath::plant::PlantParams;
use airpath::setpoints::{generate_pressure_lut, ClosedFormSteadyState, LutGrid, SteadyStateEfficiency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = PlantParams::default();
    let eval = ClosedFormSteadyState { params: params.clone() };
    let rep = generate_pressure_lut(&eval, &LutGrid::default(), &params)?;
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    println!("flow map: {:.4e} kg/(s A)", rep.map.flow_gain);
    println!("{:>7} {:>9} {:>9} {:>9} {:>7}", "I [A]", "coarse", "refined", "stored", "eta");
    for (k, &i) in rep.map.breakpoints.iter().enumerate() {
        let p = rep.map.pressures[k];
        let kpa = |v: Option<f64>| v.map_or("-".into(), |x| format!("{:.1}", x / 1e3));
        println!(
            "{i:>7.1} {:>9} {:>9} {:>9.1} {:>7.4}",
            kpa(rep.coarse[k]),
            kpa(rep.refined[k]),
            p / 1e3,
            eval.efficiency(i, p).unwrap_or(f64::NAN)
        );
    }
    rep.map.write_lut_csv(std::io::stdout().lock())?;
    Ok(())
}
