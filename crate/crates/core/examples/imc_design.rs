//! MIMO IMC on the design plant: filter, controller, sampled realization,
//! nominal loop check and disk margins on the calibrated plant with a 10 ms delay.
use airpath::analysis::imc_loop_margins;
use airpath::imc::{design_controller, design_filter, ImcConfig};
use airpath::lti::logspace;
use airpath::plant::{design_plant, linearize, PlantInputs, PlantParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ImcConfig::default();
    let filter = design_filter(&cfg)?;
    let design = design_controller(&design_plant(), &filter)?;
    let mut worst = 0.0_f64;
    for w in logspace(1e-2, 1e3, 40) {
        let t = design.nominal_complementary(w)?;
        let f = filter.freq_response(w)?;
        worst = worst.max((t - f).iter().map(|c| c.norm()).fold(0.0, f64::max));
    }
    println!("filter tau = ({}, {}) s, orders ({}, {})", cfg.tau1, cfg.tau2, cfg.n1, cfg.n2);
    println!("nominal |T - F| <= {worst:.1e}");

    let imc = design.discretize(0.02)?;
    println!("Q order {}, internal model order {}", imc.q.order(), imc.model.order());

    let lin = linearize(&PlantParams::default(), PlantInputs::new(180.0, 0.45, 190.0))?;
    let m = imc_loop_margins(&lin.design_channels(), &imc, 0.01)?;
    for (name, d) in [("v_cm", &m.channels[0]), ("u_om", &m.channels[1]), ("both", &m.all)] {
        println!(
            "{name}: alpha {:.3}, gain ±{:.2} dB, phase ±{:.2} deg at {:.2} rad/s",
            d.alpha, d.gain_margin_db, d.phase_margin_deg, d.peak_frequency
        );
    }
    Ok(())
}
