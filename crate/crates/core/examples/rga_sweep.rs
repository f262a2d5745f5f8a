//! Relative gain array of the published design plant and of the calibrated
//! nonlinear plant linearized at the same operating point.
//!
//! cargo run --release --example rga_sweep
use airpath::analysis::rga_of;
use airpath::lti::logspace;
use airpath::plant::{design_plant, linearize, PlantInputs, PlantParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let design = design_plant();
    let lin = linearize(&PlantParams::default(), PlantInputs::new(180.0, 0.45, 190.0))?;
    let calibrated = lin.design_channels();
    println!("{:>10} {:>10} {:>10}", "omega", "|R11| eq", "|R11| cal");
    for w in [0.0].into_iter().chain(logspace(1e-1, 1e3, 9)) {
        let a = rga_of(&design.freq_response(w)?, w)?;
        let b = rga_of(&calibrated.freq_response(w)?, w)?;
        println!("{w:>10.3} {:>10.4} {:>10.4}", a[(0, 0)].norm(), b[(0, 0)].norm());
    }
    // below 1 at DC the off-diagonal pairing dominates
    Ok(())
}
