//! Maximal output admissible set of a small system, checked against simulation,
//! then the set the cascade governor uses on the airpath.
use airpath::lti::StateSpaceModel;
use airpath::mas::{build_mas, select_horizon, ConstraintSet, OperatingBox, HORIZON_CAP};
use airpath::plant::PlantParams;
use airpath::setpoints::{generate_pressure_lut, ClosedFormSteadyState, LutGrid};
use airpath::sim::{System, SystemConfig};
use nalgebra::{dmatrix, dvector, DVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // lightly damped second-order system, output bounded to |y| <= 1
    let model = StateSpaceModel::new(
        dmatrix![1.6, -0.8; 1.0, 0.0],
        dmatrix![1.0; 0.0],
        dmatrix![0.1, 0.08],
        dmatrix![0.0],
        0.1,
    )?;
    let c = ConstraintSet::new(dmatrix![1.0; -1.0], dvector![1.0, 1.0])?;
    let eps = 0.01;
    let h = select_horizon(&model, &c, eps, &OperatingBox::symmetric(2, 1, 5.0, 2.0), HORIZON_CAP)?;
    let mas = build_mas(&model, &c, eps, h.jstar)?;
    println!("j* = {} after {} LPs, {} rows", h.jstar, h.linear_programs, mas.rows());

    let x0 = DVector::zeros(2);
    for v in [0.5, 0.75, 0.76, 1.0] {
        let (inside, margin) = mas.contains(&x0, v, &[]);
        let mut x = x0.clone();
        let mut peak = 0.0_f64;
        for _ in 0..400 {
            let (xn, y) = model.step(&x, &dvector![v]);
            peak = peak.max(y[0].abs());
            x = xn;
        }
        println!("v = {v}: in set {inside} (margin {margin:+.4}), simulated peak |y| {peak:.4}");
    }

    let params = PlantParams::default();
    let lut = generate_pressure_lut(&ClosedFormSteadyState { params: params.clone() }, &LutGrid::default(), &params)?;
    let sys = System::new(params, lut.map, SystemConfig::default())?;
    let gov = sys.cascade_governor()?;
    println!(
        "airpath cascade set: {} rows over {} states and {} references, j* = {}",
        gov.mas.rows(),
        gov.mas.hx.ncols(),
        gov.mas.inputs(),
        gov.mas.jstar
    );
    Ok(())
}
