//! Pipeline configuration as read from JSON. Every field has a default, so
//! `{}` is a valid config.

use std::path::{Path, PathBuf};

use cpsdre_core::ac::SnapshotConfig;
use cpsdre_core::cp::{AlsConfig, PgsConfig};
use cpsdre_core::{Matrix, Vector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub snapshot: SnapshotConfig,
    pub decomposition: DecompositionConfig,
    pub control: ControlConfig,
    /// Relative paths are taken from the directory holding the config file.
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            snapshot: SnapshotConfig::default(),
            decomposition: DecompositionConfig::default(),
            control: ControlConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Als,
    Pgs,
    /// PGS followed by ALS refinements `pgs_als1 ..= pgs_als{k}`.
    PgsAlsk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    pub method: Method,
    pub k: usize,
    pub als: AlsConfig,
    pub pgs: PgsConfig,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            method: Method::PgsAlsk,
            k: 2,
            als: AlsConfig::default(),
            pgs: PgsConfig::default(),
        }
    }
}

impl DecompositionConfig {
    /// Names of the factorizations the decompose step produces, in order.
    pub fn variants(&self) -> Vec<String> {
        match self.method {
            Method::Als => vec!["als".into()],
            Method::Pgs => vec!["pgs".into()],
            Method::PgsAlsk => std::iter::once("pgs".to_string())
                .chain((1..=self.k).map(|k| format!("pgs_als{k}")))
                .collect(),
        }
    }
}

/// Weight matrix given by shape only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    Identity,
    ScaledIdentity(f64),
}

impl WeightSpec {
    pub fn build(&self, n: usize) -> Matrix {
        match *self {
            WeightSpec::Identity => Matrix::identity(n, n),
            WeightSpec::ScaledIdentity(c) => Matrix::identity(n, n) * c,
        }
    }

    fn validate(&self, name: &str) -> Result<(), CliError> {
        match *self {
            WeightSpec::ScaledIdentity(c) if !(c > 0.0 && c.is_finite()) => {
                Err(CliError::Config(format!("control.{name}: scaled_identity needs a positive factor, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

/// Full-order actuation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuationSpec {
    /// `B = I`, one input per grid node.
    Identity,
    /// Two inputs: indicators of the left and right halves of the domain.
    HalfIndicator,
}

impl ActuationSpec {
    pub fn build(&self, grid: &Vector) -> Matrix {
        let n = grid.len();
        match self {
            ActuationSpec::Identity => Matrix::identity(n, n),
            ActuationSpec::HalfIndicator => {
                let mid = 0.5 * (grid[0] + grid[n - 1]);
                Matrix::from_fn(n, 2, |i, j| if (grid[i] < mid) == (j == 0) { 1.0 } else { 0.0 })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullIntegrator {
    /// `x+ = (I + dt (A + B K)) x`
    Explicit,
    /// Diffusion implicit, the rest explicit.
    SemiImplicitClosedLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub q: WeightSpec,
    pub r: WeightSpec,
    pub b: ActuationSpec,
    pub nt: usize,
    pub t_span: [f64; 2],
    pub stop_tol: f64,
    pub full_integrator: FullIntegrator,
    /// Also run the full-order model (needed by the report as baseline).
    pub run_full: bool,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            q: WeightSpec::Identity,
            r: WeightSpec::Identity,
            b: ActuationSpec::Identity,
            nt: 1001,
            t_span: [0.0, 1.0],
            stop_tol: 1e-14,
            full_integrator: FullIntegrator::SemiImplicitClosedLoop,
            run_full: true,
        }
    }
}

impl PipelineConfig {
    /// Reads and validates a config file, resolving relative paths against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        let ic = &mut cfg.snapshot.ac.ic;
        if ic != "default" && Path::new(ic.as_str()).is_relative() {
            *ic = base.join(ic.as_str()).to_string_lossy().into_owned();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces every seed in the config.
    pub fn apply_seed(&mut self, seed: u64) {
        self.snapshot.seed = seed;
        self.decomposition.pgs.seed = seed;
        self.decomposition.als.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: cpsdre_core::Error| CliError::Config(e.to_string());
        self.snapshot.validate().map_err(cfg_err)?;
        self.decomposition.als.validate().map_err(cfg_err)?;
        self.decomposition.pgs.validate().map_err(cfg_err)?;
        if self.decomposition.method == Method::PgsAlsk && self.decomposition.k == 0 {
            return Err(CliError::Config("decomposition.k must be at least 1".into()));
        }
        let ic = &self.snapshot.ac.ic;
        if ic != "default" && !Path::new(ic).is_file() {
            return Err(CliError::Config(format!("initial condition file {ic} does not exist")));
        }
        let c = &self.control;
        c.q.validate("q")?;
        c.r.validate("r")?;
        if c.nt < 2 {
            return Err(CliError::Config("control.nt must be at least 2".into()));
        }
        if !(c.t_span[1] > c.t_span[0]) {
            return Err(CliError::Config("control.t_span must be increasing".into()));
        }
        if !(c.stop_tol > 0.0) {
            return Err(CliError::Config("control.stop_tol must be positive".into()));
        }
        Ok(())
    }
}
