//! Python bindings. Matrices are lists of rows; tensors are a flat list in
//! `i + I (j + J k)` order plus their dimensions.

use cpsdre_core::ac::{simulate_from, AcConfig, Integrator};
use cpsdre_core::cp::{als, pgs, AlsConfig, Lambda, PgsConfig};
use cpsdre_core::sdre::{solve_care as care, stability_margin, CareProblem, Verdict};
use cpsdre_core::tensor::relative_error;
use cpsdre_core::{khatri_rao as kr, CpFactors, Error, Matrix, Tensor3, Vector};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Shape(_) | Error::Format { .. } | Error::Io { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn tensor(data: Vec<f64>, dims: [usize; 3]) -> PyResult<Tensor3> {
    Tensor3::new(dims, data).map_err(to_py)
}

fn factors_dict<'py>(py: Python<'py>, f: &CpFactors) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x", rows(&f.x))?;
    d.set_item("y", rows(&f.y))?;
    d.set_item("z", rows(&f.z))?;
    d.set_item("alpha", f.alpha.as_slice().to_vec())?;
    Ok(d)
}

/// Uncontrolled Allen-Cahn trajectory from the bundled initial profile, as
/// `nx` rows of `nt` values.
#[pyfunction]
#[pyo3(signature = (nx=101, nt=550, beta=None, explicit=false))]
fn simulate(nx: usize, nt: usize, beta: Option<f64>, explicit: bool) -> PyResult<Vec<Vec<f64>>> {
    let cfg = AcConfig {
        nx,
        nt,
        integrator: if explicit { Integrator::ExplicitEuler } else { Integrator::SemiImplicit },
        ..Default::default()
    };
    let v0 = cfg.initial_condition().map_err(to_py)?;
    Ok(rows(&simulate_from(&cfg, &v0, beta).map_err(to_py)?))
}

/// Mode-`mode` unfolding (1, 2 or 3).
#[pyfunction]
fn unfold(data: Vec<f64>, dims: [usize; 3], mode: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&tensor(data, dims)?.unfold(mode).map_err(to_py)?))
}

#[pyfunction]
fn khatri_rao(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&kr(&matrix(a)?, &matrix(b)?).map_err(to_py)?))
}

/// Rank-`rank` CP fit by alternating least squares.
#[pyfunction]
#[pyo3(signature = (data, dims, rank, seed=42, max_iters=500))]
fn cp_als<'py>(py: Python<'py>, data: Vec<f64>, dims: [usize; 3], rank: usize, seed: u64, max_iters: usize) -> PyResult<Bound<'py, PyDict>> {
    let t = tensor(data, dims)?;
    let cfg = AlsConfig { rank, seed, max_iters, ..Default::default() };
    let (f, trace) = als(&t, &cfg, None).map_err(to_py)?;
    let d = factors_dict(py, &f)?;
    d.set_item("rel_error", relative_error(&t, &f).map_err(to_py)?)?;
    d.set_item("iterations", trace.iterations())?;
    Ok(d)
}

/// Sparse CP fit; `lam` is `None` for the automatic choice.
#[pyfunction]
#[pyo3(signature = (data, dims, rank_upper=10, seed=42, lam=None))]
fn cp_pgs<'py>(py: Python<'py>, data: Vec<f64>, dims: [usize; 3], rank_upper: usize, seed: u64, lam: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let t = tensor(data, dims)?;
    let cfg = PgsConfig {
        rank_upper,
        seed,
        lambda: lam.map_or(Lambda::Auto, Lambda::Fixed),
        ..Default::default()
    };
    let r = pgs(&t, &cfg, None).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("rank_estimate", r.rank_estimate)?;
    d.set_item("rel_error", r.trace.final_error())?;
    if r.rank_estimate > 0 {
        let f = r.truncated().map_err(to_py)?;
        d.set_item("factors", factors_dict(py, &f)?)?;
    }
    Ok(d)
}

/// Stabilizing solution of `A'P + PA + Q - P B R^-1 B' P = 0`.
#[pyfunction]
fn solve_care<'py>(py: Python<'py>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, q: Vec<Vec<f64>>, r: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let p = CareProblem::new(matrix(a)?, matrix(b)?, matrix(q)?, matrix(r)?).map_err(to_py)?;
    let s = care(&p).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("pi", rows(&s.pi))?;
    d.set_item("k", rows(&s.k))?;
    d.set_item("residual", s.residual)?;
    d.set_item("stable", s.stable)?;
    Ok(d)
}

/// `"stable"`, `"unstable"` or `"indeterminate"` for `A + B K`.
#[pyfunction]
fn closed_loop_stability(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, k: Vec<Vec<f64>>) -> PyResult<&'static str> {
    let c = stability_margin(&matrix(a)?, &matrix(b)?, &matrix(k)?).map_err(to_py)?;
    Ok(match c.verdict {
        Verdict::Stable => "stable",
        Verdict::Unstable => "unstable",
        Verdict::Indeterminate => "indeterminate",
    })
}

/// Tensor of a CP model with the given factors and weights.
#[pyfunction]
fn reconstruct(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, z: Vec<Vec<f64>>, alpha: Vec<f64>) -> PyResult<(Vec<f64>, [usize; 3])> {
    let f = CpFactors::new(matrix(x)?, matrix(y)?, matrix(z)?, Vector::from_vec(alpha)).map_err(to_py)?;
    let t = f.reconstruct();
    Ok((t.data().to_vec(), t.dims()))
}

#[pymodule]
fn cpsdre(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(unfold, m)?)?;
    m.add_function(wrap_pyfunction!(khatri_rao, m)?)?;
    m.add_function(wrap_pyfunction!(cp_als, m)?)?;
    m.add_function(wrap_pyfunction!(cp_pgs, m)?)?;
    m.add_function(wrap_pyfunction!(solve_care, m)?)?;
    m.add_function(wrap_pyfunction!(closed_loop_stability, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    Ok(())
}
