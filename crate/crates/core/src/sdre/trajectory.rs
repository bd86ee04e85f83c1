use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{solve_care, CareProblem};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// How the closed loop is advanced between grid points.
#[derive(Debug, Clone)]
pub enum Propagation {
    /// `x+ = (I + dt (A + B K)) x`
    Explicit,
    /// `(I - dt L) x+ = x + dt ((A - L) x + B K x)`: the constant stiff part
    /// `L` of `A` is implicit, the rest of the loop explicit.
    SemiImplicit { stiff: Matrix },
}

#[derive(Debug, Clone)]
pub struct SdreOptions {
    pub nt: usize,
    pub t_span: (f64, f64),
    /// `||x||_inf` below which the state counts as converged.
    pub stop_tol: f64,
    pub propagation: Propagation,
    /// Keep every gain matrix in the result.
    pub record_gains: bool,
}

impl Default for SdreOptions {
    fn default() -> Self {
        Self {
            nt: 1001,
            t_span: (0.0, 1.0),
            stop_tol: 1e-14,
            propagation: Propagation::Explicit,
            record_gains: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdreRun {
    pub times: Vec<f64>,
    /// `n x nt`
    pub states: Matrix,
    /// `m x (nt - 1)`, `u_i = K_i x_i`
    pub controls: Matrix,
    pub gains: Option<Vec<Matrix>>,
    /// Riccati residual per step.
    pub residuals: Vec<f64>,
    /// Wall time of each Riccati solve.
    pub care_ms: Vec<f64>,
    pub j_quadrature: f64,
    /// `x_N^T P_{N-1} x_N`
    pub j_terminal: f64,
    pub converged_at: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdreSummary {
    pub j_quadrature: f64,
    pub j_terminal: f64,
    pub converged_at: Option<f64>,
    pub steps: usize,
    pub n: usize,
    pub m: usize,
    pub wall_ms: f64,
    pub care_ms_mean: f64,
}

/// SDRE feedback along a trajectory: at each step the Riccati equation is
/// solved for the frozen `A(x_i)`, `u_i = K_i x_i`, and the loop is advanced
/// by `opts.propagation`. Integration continues to the end of the span
/// after convergence.
pub fn sdre_trajectory(
    assemble_a: &dyn Fn(&Vector) -> Result<Matrix>,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    x0: &Vector,
    opts: &SdreOptions,
) -> Result<SdreRun> {
    let n = x0.len();
    let m = b.ncols();
    let nt = opts.nt;
    if nt < 2 {
        return Err(Error::InvalidArgument("nt must be at least 2".into()));
    }
    let (t0, t1) = opts.t_span;
    if !(t1 > t0) {
        return Err(Error::InvalidArgument("t_span must be increasing".into()));
    }
    if b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Shape(format!(
            "x0 length {n} inconsistent with B {:?}, Q {:?}, R {:?}",
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let dt = (t1 - t0) / (nt - 1) as f64;
    let implicit = match &opts.propagation {
        Propagation::Explicit => None,
        Propagation::SemiImplicit { stiff } => {
            if stiff.shape() != (n, n) {
                return Err(Error::Shape(format!("stiff part is {:?}, expected {n}x{n}", stiff.shape())));
            }
            let lhs = Matrix::identity(n, n) - stiff * dt;
            Some((stiff, lhs.lu()))
        }
    };

    let start = Instant::now();
    let times: Vec<f64> = (0..nt).map(|i| t0 + i as f64 * dt).collect();
    let mut states = Matrix::zeros(n, nt);
    let mut controls = Matrix::zeros(m, nt - 1);
    let mut gains = opts.record_gains.then(Vec::new);
    let mut residuals = Vec::with_capacity(nt - 1);
    let mut care_ms = Vec::with_capacity(nt - 1);
    let mut converged_at = None;
    let mut last_pi = Matrix::zeros(n, n);
    let mut x = x0.clone();
    states.set_column(0, &x);
    let mut problem = CareProblem::new(Matrix::zeros(n, n), b.clone(), q.clone(), r.clone())?;
    for i in 0..nt - 1 {
        let x_norm = x.amax();
        if converged_at.is_none() && x_norm < opts.stop_tol {
            converged_at = Some(times[i]);
        }
        let a = assemble_a(&x)?;
        problem.set_a(a.clone())?;
        let care_start = Instant::now();
        let sol = solve_care(&problem)
            .map_err(|e| Error::Numerical(format!("Riccati solve failed at step {i} (||x||_inf = {x_norm:.3e}): {e}")))?;
        care_ms.push(care_start.elapsed().as_secs_f64() * 1e3);
        if !sol.stable {
            return Err(Error::Numerical(format!(
                "Riccati gain at step {i} (||x||_inf = {x_norm:.3e}) is not stabilizing"
            )));
        }
        let u = &sol.k * &x;
        controls.set_column(i, &u);
        residuals.push(sol.residual);
        x = match &implicit {
            None => &x + (&a * &x + b * &u) * dt,
            Some((stiff, lu)) => {
                let rhs = &x + ((&a - *stiff) * &x + b * &u) * dt;
                lu.solve(&rhs).ok_or_else(|| Error::Singular("implicit propagation matrix".into()))?
            }
        };
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                integrator: "closed-loop".into(),
                step: i + 1,
            });
        }
        states.set_column(i + 1, &x);
        if let Some(g) = gains.as_mut() {
            g.push(sol.k.clone());
        }
        last_pi = sol.pi;
    }
    if converged_at.is_none() && x.amax() < opts.stop_tol {
        converged_at = Some(times[nt - 1]);
    }
    let j_quadrature = running_cost(&states, &controls, q, r, dt)?;
    let j_terminal = x.dot(&(&last_pi * &x));
    Ok(SdreRun {
        times,
        states,
        controls,
        gains,
        residuals,
        care_ms,
        j_quadrature,
        j_terminal,
        converged_at,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Trapezoid rule for `int x^T Q x + u^T R u dt` on a uniform grid; the
/// last control is held over the final interval.
pub fn running_cost(states: &Matrix, controls: &Matrix, q: &Matrix, r: &Matrix, dt: f64) -> Result<f64> {
    let nt = states.ncols();
    let n = states.nrows();
    let m = controls.nrows();
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    if q.shape() != (n, n) || r.shape() != (m, m) || controls.ncols() + 1 != nt {
        return Err(Error::Shape(format!(
            "states {:?}, controls {:?}, Q {:?}, R {:?}",
            states.shape(),
            controls.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let integrand = |i: usize| {
        let x = states.column(i);
        let u = controls.column(i.min(nt - 2));
        x.dot(&(q * x)) + u.dot(&(r * u))
    };
    let mut total = 0.0;
    for i in 0..nt - 1 {
        total += 0.5 * dt * (integrand(i) + integrand(i + 1));
    }
    Ok(total)
}

impl SdreRun {
    pub fn summary(&self) -> SdreSummary {
        SdreSummary {
            j_quadrature: self.j_quadrature,
            j_terminal: self.j_terminal,
            converged_at: self.converged_at,
            steps: self.times.len() - 1,
            n: self.states.nrows(),
            m: self.controls.nrows(),
            wall_ms: self.wall_ms,
            care_ms_mean: mean(&self.care_ms),
        }
    }

    pub fn care_ms_mean(&self) -> f64 {
        mean(&self.care_ms)
    }

    /// Per grid point: `t, x_inf, u_0..u_{m-1}, residual, J` where `J` is the
    /// running trapezoid cost up to `t`. Entries past the last step repeat
    /// the final control; the residual column is empty there.
    pub fn to_csv(&self, q: &Matrix, r: &Matrix) -> Result<String> {
        let nt = self.times.len();
        let m = self.controls.nrows();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string(), "x_inf".to_string()];
        header.extend((0..m).map(|j| format!("u{j}")));
        header.push("residual".into());
        header.push("J".into());
        w.write_record(&header).map_err(csv_err)?;
        let dt = if nt > 1 { self.times[1] - self.times[0] } else { 0.0 };
        let integrand = |i: usize| {
            let x = self.states.column(i);
            let u = self.controls.column(i.min(nt - 2));
            x.dot(&(q * x)) + u.dot(&(r * u))
        };
        let mut j = 0.0;
        for i in 0..nt {
            if i > 0 {
                j += 0.5 * dt * (integrand(i - 1) + integrand(i));
            }
            let mut row = vec![fmt(self.times[i]), fmt(self.states.column(i).amax())];
            let u = self.controls.column(i.min(nt - 2));
            row.extend(u.iter().map(|&v| fmt(v)));
            row.push(self.residuals.get(i).map(|&v| fmt(v)).unwrap_or_default());
            row.push(fmt(j));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numerical(format!("csv: {e}"))
}
