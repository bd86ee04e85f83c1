//! Finite-difference Allen-Cahn model
//!
//! ```text
//! v_t = nu v_xx + (v - v^3) / (2 xi^2) + beta v,   v_x = 0 at both ends
//! ```
//!
//! written as `v' = A(v) v + beta v` with
//! `A(v) = nu Lap + (I - diag(v^2)) / (2 xi^2)`.

mod snapshot;
mod spline;

pub use snapshot::{build_snapshot_tensor, SnapshotConfig, SnapshotMeta};
pub use spline::{cubic_spline_ic, read_ic_csv, DEFAULT_IC_CSV};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Semi-implicit substeps are sized so that `dt_sub * (1/xi^2 + |beta|)`
/// stays below this.
pub const REACTION_STEP_BOUND: f64 = 0.25;
/// States larger than this in magnitude count as a blow-up.
const BLOW_UP_BOUND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    ExplicitEuler,
    SemiImplicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcConfig {
    pub nu: f64,
    pub xi: f64,
    pub nx: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub nt: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub integrator: Integrator,
    /// `"default"` for the bundled profile, otherwise a CSV path with an
    /// `x,v` header.
    pub ic: String,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            xi: 0.02,
            nx: 101,
            x_min: 0.0,
            x_max: 2.0,
            nt: 550,
            t_min: 0.0,
            t_max: 1.0,
            integrator: Integrator::SemiImplicit,
            ic: "default".into(),
        }
    }
}

impl AcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.nx < 3 {
            return bad("nx must be at least 3");
        }
        if self.nt < 2 {
            return bad("nt must be at least 2");
        }
        if self.xi == 0.0 || !self.xi.is_finite() {
            return bad("xi must be finite and nonzero");
        }
        if !(self.x_max > self.x_min) || !(self.t_max > self.t_min) {
            return bad("need x_max > x_min and t_max > t_min");
        }
        if !self.nu.is_finite() || self.nu < 0.0 {
            return bad("nu must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / (self.nt - 1) as f64
    }

    pub fn grid(&self) -> Vector {
        Vector::from_fn(self.nx, |i, _| self.x_min + i as f64 * self.dx())
    }

    pub fn times(&self) -> Vector {
        Vector::from_fn(self.nt, |i, _| self.t_min + i as f64 * self.dt())
    }

    /// `1 / (2 xi^2)`
    pub fn reaction_coefficient(&self) -> f64 {
        0.5 / (self.xi * self.xi)
    }

    /// Semi-implicit substeps per output interval for control strength `beta`.
    pub fn substeps(&self, beta: f64) -> usize {
        let stiffness = 2.0 * self.reaction_coefficient() + beta.abs();
        ((self.dt() * stiffness / REACTION_STEP_BOUND).ceil() as usize).max(1)
    }

    /// Initial condition on the grid.
    pub fn initial_condition(&self) -> Result<Vector> {
        let points = if self.ic == "default" {
            read_ic_csv(DEFAULT_IC_CSV.as_bytes(), Path::new("<builtin ic_default.csv>"))?
        } else {
            let path = Path::new(&self.ic);
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            read_ic_csv(&bytes, path)?
        };
        cubic_spline_ic(&points, self.grid().as_slice())
    }
}

/// Second-difference matrix with reflecting ends (`v_0 = v_1`,
/// `v_{n+1} = v_n`), scaled by `1/dx^2`.
pub fn laplacian(nx: usize, dx: f64) -> Result<Matrix> {
    if nx < 3 || !(dx > 0.0) {
        return Err(Error::InvalidArgument(format!("laplacian needs nx >= 3 and dx > 0, got {nx}, {dx}")));
    }
    let s = 1.0 / (dx * dx);
    let mut m = Matrix::zeros(nx, nx);
    for i in 0..nx {
        if i > 0 {
            m[(i, i - 1)] = s;
        }
        if i + 1 < nx {
            m[(i, i + 1)] = s;
        }
        m[(i, i)] = if i == 0 || i == nx - 1 { -s } else { -2.0 * s };
    }
    Ok(m)
}

/// `A(v) = nu Lap + (I - diag(v^2)) / (2 xi^2)`
pub fn assemble_a(v: &Vector, cfg: &AcConfig) -> Result<Matrix> {
    if v.len() != cfg.nx {
        return Err(Error::Shape(format!("state has length {} but nx = {}", v.len(), cfg.nx)));
    }
    let mut a = laplacian(cfg.nx, cfg.dx())? * cfg.nu;
    let c = cfg.reaction_coefficient();
    for i in 0..cfg.nx {
        a[(i, i)] += c * (1.0 - v[i] * v[i]);
    }
    Ok(a)
}

/// `Lap * v` without forming the matrix.
pub(crate) fn apply_laplacian(v: &[f64], dx: f64, out: &mut [f64]) {
    let n = v.len();
    let s = 1.0 / (dx * dx);
    out[0] = s * (v[1] - v[0]);
    out[n - 1] = s * (v[n - 2] - v[n - 1]);
    for i in 1..n - 1 {
        out[i] = s * (v[i - 1] - 2.0 * v[i] + v[i + 1]);
    }
}

/// Trajectory of the uncontrolled (`beta = None`) or `u = beta v` controlled
/// model from the configured initial condition, one column per time point.
pub fn simulate(cfg: &AcConfig, beta: Option<f64>) -> Result<Matrix> {
    cfg.validate()?;
    let v0 = cfg.initial_condition()?;
    simulate_from(cfg, &v0, beta)
}

pub fn simulate_from(cfg: &AcConfig, v0: &Vector, beta: Option<f64>) -> Result<Matrix> {
    cfg.validate()?;
    if v0.len() != cfg.nx {
        return Err(Error::Shape(format!("initial state has length {} but nx = {}", v0.len(), cfg.nx)));
    }
    let beta = beta.unwrap_or(0.0);
    let (nx, nt, dx) = (cfg.nx, cfg.nt, cfg.dx());
    let c = cfg.reaction_coefficient();
    let mut out = Matrix::zeros(nx, nt);
    out.set_column(0, v0);
    let mut v = v0.as_slice().to_vec();
    let mut work = vec![0.0; nx];
    match cfg.integrator {
        Integrator::ExplicitEuler => {
            let dt = cfg.dt();
            for step in 1..nt {
                apply_laplacian(&v, dx, &mut work);
                for i in 0..nx {
                    let vi = v[i];
                    v[i] = vi + dt * (cfg.nu * work[i] + c * (vi - vi * vi * vi) + beta * vi);
                }
                check_state(&v, "explicit_euler", step)?;
                out.column_mut(step).copy_from_slice(&v);
            }
        }
        Integrator::SemiImplicit => {
            let sub = cfg.substeps(beta);
            let h = cfg.dt() / sub as f64;
            let solver = ImplicitDiffusion::new(nx, h * cfg.nu / (dx * dx));
            for step in 1..nt {
                for _ in 0..sub {
                    for i in 0..nx {
                        let vi = v[i];
                        work[i] = vi + h * (c * (vi - vi * vi * vi) + beta * vi);
                    }
                    solver.solve(&mut work);
                    std::mem::swap(&mut v, &mut work);
                }
                check_state(&v, "semi_implicit", step)?;
                out.column_mut(step).copy_from_slice(&v);
            }
        }
    }
    Ok(out)
}

fn check_state(v: &[f64], integrator: &str, step: usize) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || x.abs() > BLOW_UP_BOUND) {
        return Err(Error::BlowUp {
            integrator: integrator.into(),
            step,
        });
    }
    Ok(())
}

/// Prefactored `I - r Lap_1` with `Lap_1` the unit-spacing reflecting
/// Laplacian (Thomas algorithm).
pub(crate) struct ImplicitDiffusion {
    r: f64,
    /// modified superdiagonal
    c: Vec<f64>,
    /// inverse modified pivots
    inv: Vec<f64>,
}

impl ImplicitDiffusion {
    pub(crate) fn new(n: usize, r: f64) -> Self {
        let diag = |i: usize| if i == 0 || i == n - 1 { 1.0 + r } else { 1.0 + 2.0 * r };
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut piv = diag(0);
        inv[0] = 1.0 / piv;
        c[0] = -r * inv[0];
        for i in 1..n {
            piv = diag(i) + r * c[i - 1];
            inv[i] = 1.0 / piv;
            c[i] = -r * inv[i];
        }
        Self { r, c, inv }
    }

    /// In-place solve.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        b[0] *= self.inv[0];
        for i in 1..n {
            b[i] = (b[i] + self.r * b[i - 1]) * self.inv[i];
        }
        for i in (0..n - 1).rev() {
            b[i] -= self.c[i] * b[i + 1];
        }
    }
}
