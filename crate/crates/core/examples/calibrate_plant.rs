//! Refit the compressor map and ETB area against the published design plant
//! and print the parameter file.
//!
//! cargo run --release --example calibrate_plant > params/default.json

use airpath::plant::calibrate::CalibrationProblem;

fn main() {
    let problem = CalibrationProblem::default();
    let report = problem
        .solve([5e-5, 3.5e7, 1.2, 7e-7])
        .expect("calibration converges from the default start");
    eprintln!("iterations: {}", report.iterations);
    eprintln!("dc gain ratio vs design plant:\n{:.4}", report.dc_ratio);
    eprintln!("flow {:.6} kg/s (target {:.6})", report.flow, report.flow_target);
    println!("{}", report.params.to_json());
}
