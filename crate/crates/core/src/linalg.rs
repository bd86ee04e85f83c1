//! Small dense kernels shared by the solvers.

use nalgebra::linalg::Cholesky;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Relative pivot size below which a Gram matrix is treated as singular.
const GRAM_PIVOT_RATIO: f64 = 1e-14;

/// Solves `F * gram = rhs` for `F` with a symmetric positive semidefinite
/// `gram`. A numerically singular Gram matrix is shifted by
/// `1e-12 * trace(gram) / n` before solving. Returns the solution and whether
/// the shift was applied.
pub fn solve_gram_right(gram: &Matrix, rhs: &Matrix) -> Result<(Matrix, bool)> {
    let n = gram.nrows();
    if gram.ncols() != n || rhs.ncols() != n {
        return Err(Error::Shape(format!(
            "gram {:?} incompatible with right-hand side {:?}",
            gram.shape(),
            rhs.shape()
        )));
    }
    if let Some(ch) = well_conditioned_cholesky(gram) {
        // F G = M  <=>  G F^T = M^T
        return Ok((ch.solve(&rhs.transpose()).transpose(), false));
    }
    let trace = gram.trace();
    let delta = if trace > 0.0 {
        1e-12 * trace / n as f64
    } else {
        f64::MIN_POSITIVE.sqrt()
    };
    let shifted = gram + Matrix::identity(n, n) * delta;
    let solved = match Cholesky::new(shifted.clone()) {
        Some(ch) => ch.solve(&rhs.transpose()).transpose(),
        None => {
            let eps = f64::EPSILON * shifted.norm();
            let pinv = shifted
                .pseudo_inverse(eps)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            rhs * pinv
        }
    };
    Ok((solved, true))
}

fn well_conditioned_cholesky(gram: &Matrix) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let ch = Cholesky::new(gram.clone())?;
    let diag = ch.l_dirty().diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if max == 0.0 || (min / max).powi(2) < GRAM_PIVOT_RATIO {
        return None;
    }
    Some(ch)
}

/// LU-based inverse that reports singularity instead of returning garbage.
pub fn inverse(m: &Matrix, context: &str) -> Result<Matrix> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(context.to_string()))?;
    if inv.iter().all(|v| v.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::Singular(context.to_string()))
    }
}

/// Inverse together with `ln |det m|`, from one LU factorization.
pub fn inverse_with_log_det(m: &Matrix, context: &str) -> Result<(Matrix, f64)> {
    let lu = m.clone().lu();
    let mut log_det = 0.0;
    for &d in lu.u().diagonal().iter() {
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Singular(context.to_string()));
        }
        log_det += d.abs().ln();
    }
    let inv = lu.try_inverse().ok_or_else(|| Error::Singular(context.to_string()))?;
    if !inv.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular(context.to_string()));
    }
    Ok((inv, log_det))
}

/// Least-squares solution of the overdetermined system `a * x = b` via
/// Householder QR. `a` must have full column rank.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() < a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "lstsq needs a tall system, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    r.solve_upper_triangular(&qtb)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("least-squares triangular factor".into()))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by a fixed
/// number of power iterations from the all-ones start.
pub fn power_iteration_norm(sym: &Matrix, iterations: usize) -> f64 {
    let n = sym.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = sym * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // final Rayleigh quotient with the last iterate
    lambda.max(v.dot(&(sym * &v)))
}
