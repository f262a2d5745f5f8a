//! Batch command-line surface behind the `fcs` binary.
//!
//! Exit codes: 0 success, 1 domain error, 2 I/O error, 3 configuration or usage error.

mod manifest;

pub use manifest::{FileDigest, RunManifest};

use crate::analysis::{imc_loop_margins, rga_of, AnalysisError, DiskMargin};
use crate::imc::{design_controller, design_filter, ImcError};
use crate::lti::{logspace, LtiError, StateSpaceModel};
use crate::mas::{build_mas_feedthrough, select_horizon, ConstraintSet, MasError, OperatingBox, HORIZON_CAP};
use crate::plant::{design_plant, linearize, Linearization, PlantError, PlantInputs, PlantParams, LINEAR_OUTPUTS};
use crate::rg::RgError;
use crate::setpoints::{generate_pressure_lut, ClosedFormSteadyState, LutGrid, SetpointError, SetpointMap};
use crate::sim::{
    compute_metrics, run_closed_loop, ControllerKind, GovernorKind, ScenarioFile, SimError, SimTrace, System,
    SystemConfig, PLOT_PANELS,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Environment variable naming the default plant parameter file.
pub const PARAMS_ENV: &str = "FCS_PARAMS";

/// Stack-current range covered by the set-point maps, A.
pub const CURRENT_RANGE: (f64, f64) = (75.0, 212.5);

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(String),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Domain(_) => 1,
            Self::Io { .. } => 2,
            Self::Config(_) => 3,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    }
}

impl From<PlantError> for CliError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::Io { path, reason } => Self::Io { path: path.into(), reason },
            PlantError::InvalidParams(_) => Self::Config(e.to_string()),
            _ => Self::Domain(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io { path, reason } => Self::Io { path, reason },
            SimError::Config(_) | SimError::Parse { .. } => Self::Config(e.to_string()),
            SimError::Setup(p) => p.into(),
            SimError::Setpoint(s) => s.into(),
            SimError::Rg(r) => r.into(),
            SimError::Imc(i) => i.into(),
            SimError::Plant { .. } => Self::Domain(e.to_string()),
        }
    }
}

impl From<SetpointError> for CliError {
    fn from(e: SetpointError) -> Self {
        match e {
            SetpointError::Parse { .. } | SetpointError::UnsortedBreakpoints | SetpointError::Empty => {
                Self::Config(e.to_string())
            }
            SetpointError::Io(io) => Self::Io {
                path: PathBuf::new(),
                reason: io.to_string(),
            },
            _ => Self::Domain(e.to_string()),
        }
    }
}

impl From<RgError> for CliError {
    fn from(e: RgError) -> Self {
        match e {
            RgError::Config(_) => Self::Config(e.to_string()),
            _ => Self::Domain(e.to_string()),
        }
    }
}

impl From<ImcError> for CliError {
    fn from(e: ImcError) -> Self {
        match e {
            ImcError::Config(_) => Self::Config(e.to_string()),
            _ => Self::Domain(e.to_string()),
        }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Domain(e.to_string())
            }
        }
    )*};
}
domain_from!(MasError, AnalysisError, LtiError);

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), CliError> {
    write_file(path, serde_json::to_string_pretty(v).expect("json value").as_bytes())
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "fcs", version, about = "Fuel-cell airpath design, governing and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Inputs {
    /// Plant parameter JSON; falls back to $FCS_PARAMS, then the built-in set
    #[arg(long)]
    params: Option<PathBuf>,
    /// System configuration JSON (operating point, IMC, governor, limits)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pressure LUT CSV; generated on the default grid when absent
    #[arg(long)]
    lut: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Equilibrium and continuous linearization at an operating point
    Linearize {
        #[command(flatten)]
        inputs: Inputs,
        /// Compressor voltage [V], throttle [-], stack current [A]
        #[arg(long, value_delimiter = ',', default_values_t = [180.0, 0.45, 190.0])]
        op_point: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative gain array magnitudes over frequency
    Rga {
        /// Output of `linearize`; the published design plant is used when absent
        #[arg(long)]
        linearization: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-2)]
        omega_min: f64,
        #[arg(long, default_value_t = 1e4)]
        omega_max: f64,
        #[arg(long, default_value_t = 400)]
        points: usize,
        /// CSV with columns omega_rad_s,r11,r12,r21,r22
        #[arg(long)]
        out: PathBuf,
    },
    /// Sampled MIMO IMC and its disk margins on the calibrated plant
    ImcDesign {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        tau1: Option<f64>,
        #[arg(long)]
        tau2: Option<f64>,
        #[arg(long)]
        n1: Option<u32>,
        #[arg(long)]
        n2: Option<u32>,
        /// Actuator delay used for the margins, s
        #[arg(long, default_value_t = 0.01)]
        delay: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximal admissible set, from a model file or for a governor of the configured system
    MasBuild {
        #[command(flatten)]
        inputs: Inputs,
        /// Discrete state-space JSON; needs --constraints
        #[arg(long, requires = "constraints")]
        model: Option<PathBuf>,
        /// Output constraints JSON {"S": [[..]], "s": [..]}
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Input column governed by the set (model mode)
        #[arg(long, default_value_t = 0)]
        governed: usize,
        #[arg(long, default_value_t = crate::mas::DEFAULT_EPS)]
        eps: f64,
        /// Prediction horizon; selected by redundancy when absent
        #[arg(long)]
        jstar: Option<usize>,
        /// Governor whose set is built when no model is given (load | cc-rg)
        #[arg(long, default_value = "cc-rg", conflicts_with = "model")]
        governor: GovernorKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Efficiency-optimal pressure LUT over a current grid
    SweepSetpoints {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 75.0)]
        i_min: f64,
        #[arg(long, default_value_t = 212.5)]
        i_max: f64,
        #[arg(long, default_value_t = 12.5)]
        i_step: f64,
        #[arg(long, default_value_t = 105_000.0)]
        p_min: f64,
        #[arg(long, default_value_t = 300_000.0)]
        p_max: f64,
        #[arg(long, default_value_t = 5_000.0)]
        p_step: f64,
        /// LUT CSV
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON with coarse and refined optima and warnings
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Closed-loop simulation of one scenario, or several in parallel with --batch
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, required_unless_present = "batch", conflicts_with = "batch")]
        scenario: Option<PathBuf>,
        /// Scenario files run concurrently
        #[arg(long, num_args = 1..)]
        batch: Vec<PathBuf>,
        /// Worker threads for --batch; defaults to the available parallelism
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the scenario's governor (none | load | cc-rg)
        #[arg(long)]
        governor: Option<GovernorKind>,
        /// Overrides the scenario's controller (mimo | siso)
        #[arg(long)]
        controller: Option<ControllerKind>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Worst-case OER, net-power MAPE, hydrogen use and speed of a trace
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        /// Reference trace whose net power is the MAPE target
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Samples below this stack current are ignored for the worst OER, A
        #[arg(long, default_value_t = 10.0)]
        threshold: f64,
        /// Metrics JSON; printed to stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tidy per-panel CSVs for plotting
    PlotData {
        #[arg(long)]
        trace: PathBuf,
        /// Subset of panels (oer, flow, pressure, actuators, current, power)
        #[arg(long, value_delimiter = ',')]
        panels: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return code;
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, &raw) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_params(path: Option<&Path>, m: &mut RunManifest) -> Result<PlantParams, CliError> {
    let path = path.map(Path::to_path_buf).or_else(|| std::env::var_os(PARAMS_ENV).map(PathBuf::from));
    match path {
        Some(p) => {
            let params = PlantParams::load(&p)?;
            m.config(&p)?;
            Ok(params)
        }
        None => Ok(PlantParams::default()),
    }
}

fn load_config(path: Option<&Path>, m: &mut RunManifest) -> Result<SystemConfig, CliError> {
    match path {
        Some(p) => {
            let c = read_json(p)?;
            m.config(p)?;
            Ok(c)
        }
        None => Ok(SystemConfig::default()),
    }
}

fn load_map(path: Option<&Path>, params: &PlantParams, m: &mut RunManifest) -> Result<SetpointMap, CliError> {
    match path {
        Some(p) => {
            let map = SetpointMap::read_lut_csv(open(p)?, params)?;
            m.input(p)?;
            Ok(map)
        }
        None => {
            let eval = ClosedFormSteadyState { params: params.clone() };
            Ok(generate_pressure_lut(&eval, &LutGrid::default(), params)?.map)
        }
    }
}

fn build_system(inputs: &Inputs, m: &mut RunManifest) -> Result<System, CliError> {
    let params = load_params(inputs.params.as_deref(), m)?;
    let config = load_config(inputs.config.as_deref(), m)?;
    let map = load_map(inputs.lut.as_deref(), &params, m)?;
    Ok(System::new(params, map, config)?)
}

fn margin_json(d: &DiskMargin) -> serde_json::Value {
    json!({
        "alpha": d.alpha,
        "gain_margin_db": d.gain_margin_db,
        "phase_margin_deg": d.phase_margin_deg,
        "peak_frequency_rad_s": d.peak_frequency,
    })
}

fn grid(lo: f64, hi: f64, step: f64, what: &str) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && hi >= lo) {
        return Err(CliError::Config(format!("{what} grid needs min <= max and a positive step")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + step * k as f64).collect())
}

fn finish(mut m: RunManifest, started: Instant, outputs: &[&Path], manifest_path: &Path) -> Result<(), CliError> {
    for o in outputs {
        m.output(o)?;
    }
    m.wall_time_s = started.elapsed().as_secs_f64();
    m.write(manifest_path)
}

fn execute(cmd: Command, raw: &[String]) -> Result<(), CliError> {
    let started = Instant::now();
    let name = raw.first().cloned().unwrap_or_default();
    let mut m = RunManifest::new(&name, raw);
    match cmd {
        Command::Linearize { inputs, op_point, out } => {
            let &[v, u, i] = op_point.as_slice() else {
                return Err(CliError::Config(format!("--op-point needs V,U,I, got {} values", op_point.len())));
            };
            let params = load_params(inputs.params.as_deref(), &mut m)?;
            let op = PlantInputs::new(v, u, i);
            if !(CURRENT_RANGE.0..=CURRENT_RANGE.1).contains(&op.i_st) {
                eprintln!(
                    "warning: stack current {} A is outside [{}, {}] A; attempting anyway",
                    op.i_st, CURRENT_RANGE.0, CURRENT_RANGE.1
                );
            }
            let lin = linearize(&params, op)?;
            let eig: Vec<[f64; 2]> = lin.model.eigenvalues().iter().map(|e| [e.re, e.im]).collect();
            write_json(
                &out,
                &json!({
                    "linearization": lin,
                    "output_names": LINEAR_OUTPUTS,
                    "eigenvalues": eig,
                    "design_channels": lin.design_channels(),
                }),
            )?;
            println!(
                "equilibrium p_ca {:.1} Pa, omega_cp {:.1} rad/s, p_sm {:.1} Pa; eigenvalues {:?}",
                lin.state.p_ca, lin.state.omega_cp, lin.state.p_sm, eig
            );
            finish(m, started, &[&out], &RunManifest::path_for(&out))
        }
        Command::Rga {
            linearization,
            omega_min,
            omega_max,
            points,
            out,
        } => {
            if !(omega_min > 0.0 && omega_max > omega_min && points >= 2) {
                return Err(CliError::Config("frequency grid needs 0 < omega-min < omega-max and points >= 2".into()));
            }
            let freqs = logspace(omega_min, omega_max, points);
            let response: Box<dyn Fn(f64) -> Result<_, LtiError>> = match &linearization {
                Some(p) => {
                    let v: serde_json::Value = read_json(p)?;
                    let lin: Linearization = serde_json::from_value(v["linearization"].clone())
                        .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    m.input(p)?;
                    let g = lin.design_channels();
                    Box::new(move |w| g.freq_response(w))
                }
                None => {
                    let g = design_plant();
                    Box::new(move |w| g.freq_response(w))
                }
            };
            let mut csv = String::from("omega_rad_s,r11,r12,r21,r22\n");
            for &w in &freqs {
                let r = rga_of(&response(w)?, w)?;
                let row = [w, r[(0, 0)].norm(), r[(0, 1)].norm(), r[(1, 0)].norm(), r[(1, 1)].norm()]
                    .map(crate::io::fmt17)
                    .join(",");
                csv.push_str(&row);
                csv.push('\n');
            }
            write_file(&out, csv.as_bytes())?;
            let dc = rga_of(&response(0.0)?, 0.0)?;
            println!("|R11(0)| = {:.4}", dc[(0, 0)].norm());
            finish(m, started, &[&out], &RunManifest::path_for(&out))
        }
        Command::ImcDesign {
            inputs,
            tau1,
            tau2,
            n1,
            n2,
            delay,
            out,
        } => {
            let params = load_params(inputs.params.as_deref(), &mut m)?;
            let mut cfg = load_config(inputs.config.as_deref(), &mut m)?;
            cfg.imc.tau1 = tau1.unwrap_or(cfg.imc.tau1);
            cfg.imc.tau2 = tau2.unwrap_or(cfg.imc.tau2);
            cfg.imc.n1 = n1.unwrap_or(cfg.imc.n1);
            cfg.imc.n2 = n2.unwrap_or(cfg.imc.n2);
            cfg.imc.validate()?;
            let design = design_controller(&design_plant(), &design_filter(&cfg.imc)?)?;
            let imc = design.discretize(cfg.ts)?;
            let [v, u, i] = cfg.op_point;
            let lin = linearize(&params, PlantInputs::new(v, u, i))?;
            let margins = imc_loop_margins(&lin.design_channels(), &imc, delay)?;
            for (k, d) in margins.channels.iter().enumerate() {
                println!(
                    "{}: ±{:.2} dB / ±{:.2}°",
                    ["v_cm", "u_om"][k],
                    d.gain_margin_db,
                    d.phase_margin_deg
                );
            }
            println!("all: ±{:.2} dB / ±{:.2}°", margins.all.gain_margin_db, margins.all.phase_margin_deg);
            write_json(
                &out,
                &json!({
                    "filter": cfg.imc,
                    "ts": cfg.ts,
                    "controller": imc,
                    "margins": {
                        "delay_s": delay,
                        "channels": margins.channels.iter().map(margin_json).collect::<Vec<_>>(),
                        "all": margin_json(&margins.all),
                    },
                }),
            )?;
            finish(m, started, &[&out], &RunManifest::path_for(&out))
        }
        Command::MasBuild {
            inputs,
            model,
            constraints,
            governed,
            eps,
            jstar,
            governor,
            out,
        } => {
            let mas = match (model, constraints) {
                (Some(mp), Some(cp)) => {
                    let model: StateSpaceModel = read_json(&mp)?;
                    let c: ConstraintSet = read_json(&cp)?;
                    m.input(&mp)?;
                    m.input(&cp)?;
                    if !model.is_stable() {
                        return Err(MasError::Unstable(model.spectral_radius()).into());
                    }
                    if governed >= model.inputs() {
                        return Err(CliError::Config(format!(
                            "governed input {governed} out of range for {} inputs",
                            model.inputs()
                        )));
                    }
                    let j = match jstar {
                        Some(j) => j,
                        None => {
                            let bx = OperatingBox::symmetric(model.order(), model.inputs(), 1.0, 1.0);
                            select_horizon(&model, &c, eps, &bx, HORIZON_CAP)?.jstar
                        }
                    };
                    build_mas_feedthrough(&model, governed, &c, eps, j)?
                }
                (None, _) => {
                    let mut cfg_inputs = inputs.clone();
                    let sys = {
                        let mut sys_m = RunManifest::new(&name, raw);
                        let s = build_system(&cfg_inputs, &mut sys_m)?;
                        m.config_paths.extend(sys_m.config_paths);
                        m.inputs.extend(sys_m.inputs);
                        s
                    };
                    cfg_inputs.lut = None;
                    match governor {
                        GovernorKind::Load => sys.load_governor()?.mas.clone(),
                        GovernorKind::CcRg => sys.cascade_governor()?.mas.clone(),
                        GovernorKind::None => {
                            return Err(CliError::Config("mas-build needs --governor load or cc-rg".into()))
                        }
                    }
                }
                (Some(_), None) => unreachable!("clap enforces --constraints with --model"),
            };
            println!("{} rows, j* = {}", mas.rows(), mas.jstar);
            write_json(&out, &mas.to_json())?;
            finish(m, started, &[&out], &RunManifest::path_for(&out))
        }
        Command::SweepSetpoints {
            inputs,
            i_min,
            i_max,
            i_step,
            p_min,
            p_max,
            p_step,
            out,
            report,
        } => {
            let params = load_params(inputs.params.as_deref(), &mut m)?;
            let g = LutGrid {
                currents: grid(i_min, i_max, i_step, "current")?,
                pressures: grid(p_min, p_max, p_step, "pressure")?,
            };
            let rep = generate_pressure_lut(&ClosedFormSteadyState { params: params.clone() }, &g, &params)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            let mut buf = Vec::new();
            rep.map.write_lut_csv(&mut buf)?;
            write_file(&out, &buf)?;
            let mut outs = vec![out.as_path()];
            if let Some(r) = &report {
                write_json(
                    r,
                    &json!({
                        "currents": g.currents,
                        "coarse": rep.coarse,
                        "refined": rep.refined,
                        "stored": rep.map.pressures,
                        "warnings": rep.warnings,
                    }),
                )?;
                outs.push(r);
            }
            finish(m, started, &outs, &RunManifest::path_for(&out))
        }
        Command::Simulate {
            inputs,
            scenario,
            batch,
            workers,
            governor,
            controller,
            out_dir,
        } => {
            let sys = build_system(&inputs, &mut m)?;
            let files: Vec<PathBuf> = scenario.into_iter().chain(batch).collect();
            let job = |path: &PathBuf| -> Result<(), CliError> {
                let t0 = Instant::now();
                let mut mm = m.clone();
                mm.input(path)?;
                let file = ScenarioFile::load(path)?;
                let base = path.parent().unwrap_or(Path::new("."));
                for p in file.inputs(base) {
                    mm.input(&p)?;
                }
                let mut sc = file.resolve(base)?;
                sc.governor = governor.unwrap_or(sc.governor);
                sc.controller = controller.unwrap_or(sc.controller);
                sc.validate()?;
                let trace = run_closed_loop(&sys, &sc)?;
                let metrics = compute_metrics(&trace, None, sys.config.oer_current_threshold);
                let trace_path = out_dir.join(format!("{}.trace.csv", sc.name));
                let metrics_path = out_dir.join(format!("{}.metrics.json", sc.name));
                let mut buf = Vec::new();
                trace.write_csv(&mut buf).map_err(|e| CliError::io(&trace_path, e))?;
                write_file(&trace_path, &buf)?;
                write_json(&metrics_path, &serde_json::to_value(&metrics).expect("metrics serialize"))?;
                println!(
                    "{}: worst OER {:.4} at {:.2} s, H2 {:.3} g, {:.0}x real time",
                    sc.name,
                    metrics.worst_oer,
                    metrics.worst_oer_time_s,
                    metrics.h2_grams,
                    metrics.normalized_exec_time.unwrap_or(f64::NAN)
                );
                let manifest = out_dir.join(format!("{}.manifest.json", sc.name));
                finish(mm, t0, &[&trace_path, &metrics_path], &manifest)
            };
            if files.len() == 1 {
                return job(&files[0]);
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.unwrap_or(0))
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let results: Vec<Result<(), CliError>> = pool.install(|| files.par_iter().map(job).collect());
            // report every failure, exit with the first one's code
            let mut first = None;
            for (f, r) in files.iter().zip(results) {
                if let Err(e) = r {
                    eprintln!("{}: {e}", f.display());
                    first.get_or_insert(e);
                }
            }
            first.map_or(Ok(()), Err)
        }
        Command::Metrics {
            trace,
            reference,
            threshold,
            out,
        } => {
            let tr = SimTrace::read_csv(open(&trace)?)?;
            m.input(&trace)?;
            let rf = match &reference {
                Some(p) => {
                    m.input(p)?;
                    Some(SimTrace::read_csv(open(p)?)?)
                }
                None => None,
            };
            if let Some(r) = &rf {
                if r.rows.len() != tr.rows.len() {
                    return Err(CliError::Config(format!(
                        "reference has {} rows, trace has {}",
                        r.rows.len(),
                        tr.rows.len()
                    )));
                }
            }
            let metrics = compute_metrics(&tr, rf.as_ref(), threshold);
            let v = serde_json::to_value(&metrics).expect("metrics serialize");
            match out {
                Some(o) => {
                    write_json(&o, &v)?;
                    finish(m, started, &[&o], &RunManifest::path_for(&o))
                }
                None => {
                    println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
                    Ok(())
                }
            }
        }
        Command::PlotData { trace, panels, out_dir } => {
            let tr = SimTrace::read_csv(open(&trace)?)?;
            m.input(&trace)?;
            let panels: Vec<String> = if panels.is_empty() {
                PLOT_PANELS.iter().map(|s| s.to_string()).collect()
            } else {
                panels
            };
            let mut written = Vec::new();
            for p in &panels {
                if !PLOT_PANELS.contains(&p.as_str()) {
                    return Err(CliError::Config(format!("unknown panel `{p}` (expected one of {PLOT_PANELS:?})")));
                }
                let path = out_dir.join(format!("{p}.csv"));
                let mut buf = Vec::new();
                tr.write_tidy(p, &mut buf)?;
                write_file(&path, &buf)?;
                written.push(path);
            }
            let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
            finish(m, started, &refs, &out_dir.join("manifest.json"))
        }
    }
}
