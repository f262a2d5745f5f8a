//! Fixed-step closed-loop simulation: nonlinear plant, IMC, set-point maps and
//! governors on a common 20 ms tick, plus drive cycles and run metrics.

mod metrics;
mod profile;
mod run;
mod system;
mod trace;

pub use metrics::{compute_metrics, rise_time_90, Metrics};
pub use profile::{
    ingest_drive_cycle, read_current_profile, Profile, CURRENT_HEADER, POWER_HEADER, STEP_DWELL, STEP_LEVELS,
};
pub use run::{run_closed_loop, steady_power_current};
pub use system::{ActuatorLimits, PowerLoopModel, System, SystemConfig};
pub use trace::{SimTrace, TraceRow, FLAG_CURRENT, FLAG_FLOW, FLAG_PRESSURE, PLOT_PANELS, TRACE_COLUMNS};

use crate::imc::ImcError;
use crate::plant::PlantError;
use crate::rg::RgError;
use crate::setpoints::SetpointError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("t = {t:.3} s: {source}")]
    Plant {
        t: f64,
        #[source]
        source: PlantError,
    },
    #[error(transparent)]
    Setup(#[from] PlantError),
    #[error(transparent)]
    Imc(#[from] ImcError),
    #[error(transparent)]
    Rg(#[from] RgError),
    #[error(transparent)]
    Setpoint(#[from] SetpointError),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GovernorKind {
    None,
    Load,
    CcRg,
}

impl std::str::FromStr for GovernorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "load" => Ok(Self::Load),
            "cc-rg" => Ok(Self::CcRg),
            _ => Err(format!("unknown governor `{s}` (none | load | cc-rg)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    /// Compressor-only flow loop, throttle held fixed.
    Siso,
    /// Two-by-two IMC on flow and pressure.
    Mimo,
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "siso" => Ok(Self::Siso),
            "mimo" => Ok(Self::Mimo),
            _ => Err(format!("unknown controller `{s}` (siso | mimo)")),
        }
    }
}

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_TS: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub profile: Profile,
    pub dt: f64,
    pub ts: f64,
    /// Actuator transport delay, at most one tick.
    pub delay: f64,
    pub duration: f64,
    pub governor: GovernorKind,
    pub controller: ControllerKind,
}

impl Scenario {
    pub fn new(name: &str, profile: Profile, governor: GovernorKind, controller: ControllerKind) -> Self {
        let duration = profile.natural_duration();
        Self {
            name: name.to_string(),
            profile,
            dt: DEFAULT_DT,
            ts: DEFAULT_TS,
            delay: 0.0,
            duration,
            governor,
            controller,
        }
    }

    pub fn substeps(&self) -> usize {
        (self.ts / self.dt).round() as usize
    }

    pub fn delay_steps(&self) -> usize {
        (self.delay / self.dt).round() as usize
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.profile.validate()?;
        if !(self.dt > 0.0 && self.ts > 0.0 && self.duration > 0.0) {
            return Err(SimError::Config("dt, ts and duration must be positive".into()));
        }
        let m = self.ts / self.dt;
        if (m - m.round()).abs() > 1e-9 * m || m.round() < 1.0 {
            return Err(SimError::Config(format!("ts = {} is not an integer multiple of dt = {}", self.ts, self.dt)));
        }
        let d = self.delay / self.dt;
        if self.delay < 0.0 || self.delay > self.ts || (d - d.round()).abs() > 1e-9 * d.max(1.0) {
            return Err(SimError::Config("delay must be a multiple of dt within one tick".into()));
        }
        if self.controller == ControllerKind::Siso && self.governor != GovernorKind::None {
            return Err(SimError::Config("governors need the two-channel controller".into()));
        }
        Ok(())
    }
}

/// On-disk scenario description; profile paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub profile: ProfileSource,
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default = "default_governor")]
    pub governor: GovernorKind,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_ts")]
    pub ts_s: f64,
    #[serde(default)]
    pub delay_s: f64,
}

fn default_governor() -> GovernorKind {
    GovernorKind::None
}
fn default_controller() -> ControllerKind {
    ControllerKind::Mimo
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_ts() -> f64 {
    DEFAULT_TS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSource {
    Steps,
    CurrentCsv { path: PathBuf },
    PowerCsv { path: PathBuf },
}

fn open(path: &Path) -> Result<std::fs::File, SimError> {
    std::fs::File::open(path).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    /// Resolve into a runnable scenario.
    pub fn resolve(&self, base: &Path) -> Result<Scenario, SimError> {
        let locate = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let profile = match &self.profile {
            ProfileSource::Steps => Profile::step_fixture(),
            ProfileSource::CurrentCsv { path } => read_current_profile(open(&locate(path))?)?,
            ProfileSource::PowerCsv { path } => ingest_drive_cycle(open(&locate(path))?)?,
        };
        let mut s = Scenario::new(&self.name, profile, self.governor, self.controller);
        if let Some(d) = self.duration_s {
            s.duration = d;
        }
        s.dt = self.dt_s;
        s.ts = self.ts_s;
        s.delay = self.delay_s;
        s.validate()?;
        Ok(s)
    }

    /// Profile files referenced by this scenario.
    pub fn inputs(&self, base: &Path) -> Vec<PathBuf> {
        match &self.profile {
            ProfileSource::Steps => vec![],
            ProfileSource::CurrentCsv { path } | ProfileSource::PowerCsv { path } => vec![base.join(path)],
        }
    }
}
