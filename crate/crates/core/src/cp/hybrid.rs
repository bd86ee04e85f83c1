//! Hybrid regularization of the weight update: the l1 penalty is replaced by
//! a reweighted l2 penalty `lambda ||L a||^2` with
//! `L = diag((|a_i| + eps)^(-1/2))`, the preconditioned least-squares
//! operator is projected by Golub-Kahan bidiagonalization, and `lambda` is
//! picked by generalized cross validation on the projected problem.
//!
//! Penalty convention: the projected problem is
//! `min_y ||M y - beta1 e1||^2 + lambda ||y||^2`, so `lambda` here is twice
//! the l1 weight of the equivalent `1/2 ||.||^2 + lambda_1 ||a||_1` form.

use nalgebra::SVD;

use super::AlphaProblem;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Smoothing term in the reweighting diagonal.
pub const IRLS_EPSILON: f64 = 1e-10;
const BREAKDOWN_TOL: f64 = 1e-14;
const GCV_GRID_POINTS: usize = 30;
const GCV_LOG10_MIN: f64 = -8.0;
const GCV_LOG10_MAX: f64 = 2.0;

/// Golub-Kahan quantities with `A V = U M` (and `Q^T Z = U M` in terms of
/// the unpreconditioned operator).
#[derive(Debug, Clone)]
pub struct BidiagState {
    /// `(k+1) x k` lower bidiagonal.
    pub m: Matrix,
    /// `k+1` orthonormal left vectors.
    pub u: Matrix,
    /// `k` orthonormal right vectors of the preconditioned problem.
    pub v: Matrix,
    /// `L^{-1} V`, the solution-space basis.
    pub z: Matrix,
    pub beta1: f64,
}

impl BidiagState {
    pub fn steps(&self) -> usize {
        self.m.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct HybridUpdate {
    pub alpha: Vector,
    pub lambda: f64,
    pub state: BidiagState,
}

/// `steps` iterations of Golub-Kahan bidiagonalization of `op` started from
/// `rhs`, with full reorthogonalization. Stops early on breakdown.
pub fn golub_kahan(op: &Matrix, rhs: &Vector, steps: usize) -> Result<BidiagState> {
    let (rows, cols) = op.shape();
    if rhs.len() != rows {
        return Err(Error::Shape(format!(
            "operator has {rows} rows but right-hand side has length {}",
            rhs.len()
        )));
    }
    if steps == 0 || steps > cols {
        return Err(Error::InvalidArgument(format!(
            "Golub-Kahan steps must be in 1..={cols}, got {steps}"
        )));
    }
    let beta1 = rhs.norm();
    if beta1 == 0.0 {
        return Err(Error::InvalidArgument("Golub-Kahan needs a nonzero start vector".into()));
    }
    let mut us: Vec<Vector> = vec![rhs / beta1];
    let mut vs: Vec<Vector> = Vec::with_capacity(steps);
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);

    let mut w = op.tr_mul(&us[0]);
    loop {
        // right vector
        if let Some(prev) = vs.last() {
            w.axpy(-betas[betas.len() - 1], prev, 1.0);
        }
        reorthogonalize(&mut w, &vs);
        let a = w.norm();
        if a < BREAKDOWN_TOL {
            break;
        }
        let v = w / a;
        alphas.push(a);

        // left vector
        let mut p = op * &v;
        p.axpy(-a, us.last().unwrap(), 1.0);
        reorthogonalize(&mut p, &us);
        let b = p.norm();
        vs.push(v);
        if b < BREAKDOWN_TOL {
            // rhs lies in the Krylov space: finish with a zero subdiagonal
            betas.push(0.0);
            us.push(orthonormal_completion(&us, rows));
            break;
        }
        betas.push(b);
        us.push(p / b);
        if vs.len() == steps {
            break;
        }
        w = op.tr_mul(us.last().unwrap());
    }

    let k = vs.len();
    if k == 0 {
        return Err(Error::Numerical("Golub-Kahan broke down at the first step".into()));
    }
    let mut m = Matrix::zeros(k + 1, k);
    for j in 0..k {
        m[(j, j)] = alphas[j];
        m[(j + 1, j)] = betas[j];
    }
    let u = Matrix::from_columns(&us[..k + 1]);
    let v = Matrix::from_columns(&vs);
    Ok(BidiagState {
        z: v.clone(),
        m,
        u,
        v,
        beta1,
    })
}

fn reorthogonalize(w: &mut Vector, basis: &[Vector]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(w);
            w.axpy(-c, b, 1.0);
        }
    }
}

fn orthonormal_completion(basis: &[Vector], rows: usize) -> Vector {
    let mut best = Vector::zeros(rows);
    for e in 0..rows {
        let mut cand = Vector::zeros(rows);
        cand[e] = 1.0;
        reorthogonalize(&mut cand, basis);
        if cand.norm() > best.norm() {
            best = cand;
        }
    }
    let n = best.norm();
    if n > 0.0 {
        best / n
    } else {
        best
    }
}

/// Picks `lambda` on the projected problem by GCV over a log grid scaled by
/// `beta1` and returns `(lambda, y)`.
fn gcv_projected_solve(m: &Matrix, beta1: f64, floor: f64) -> (f64, Vector) {
    let k = m.ncols();
    let svd = SVD::new(m.clone(), true, true);
    let uh = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    // U^T (beta1 e1)
    let c: Vector = uh.row(0).transpose() * beta1;
    let perp2 = (beta1 * beta1 - c.norm_squared()).max(0.0);

    let mut best = (f64::INFINITY, 0.0);
    for step in 0..GCV_GRID_POINTS {
        let exponent = GCV_LOG10_MIN
            + (GCV_LOG10_MAX - GCV_LOG10_MIN) * step as f64 / (GCV_GRID_POINTS - 1) as f64;
        let lambda = beta1 * 10f64.powf(exponent);
        let mut res2 = perp2;
        let mut trace = (k + 1) as f64;
        for i in 0..sigma.len() {
            let s2 = sigma[i] * sigma[i];
            let filt = s2 / (s2 + lambda);
            res2 += ((1.0 - filt) * c[i]).powi(2);
            trace -= filt;
        }
        let g = res2 / (trace * trace);
        if g < best.0 {
            best = (g, lambda);
        }
    }
    let lambda = best.1.max(floor);
    let coeffs = Vector::from_fn(sigma.len(), |i, _| sigma[i] * c[i] / (sigma[i] * sigma[i] + lambda));
    (lambda, vt.tr_mul(&coeffs))
}

impl AlphaProblem {
    /// Hybrid-regularized weight update from the current weights `alpha`.
    pub fn hybrid_update(&self, alpha: &Vector, gk_steps: usize) -> Result<HybridUpdate> {
        if alpha.len() != self.dim() {
            return Err(Error::Shape(format!("alpha length {} vs problem size {}", alpha.len(), self.dim())));
        }
        let linv = alpha.map(|a| (a.abs() + IRLS_EPSILON).sqrt());
        self.hybrid_update_with(&linv, gk_steps, 0.0)
    }

    /// Hybrid update with an explicit `L^{-1}` diagonal; the GCV choice is
    /// bounded below by `lambda_floor`.
    pub fn hybrid_update_with(&self, linv: &Vector, gk_steps: usize, lambda_floor: f64) -> Result<HybridUpdate> {
        let r = self.dim();
        if linv.len() != r {
            return Err(Error::Shape(format!("L^-1 length {} vs problem size {r}", linv.len())));
        }
        if gk_steps == 0 || gk_steps > r {
            return Err(Error::InvalidArgument(format!(
                "gk_steps must be in 1..={r}, got {gk_steps}"
            )));
        }
        let beta1 = self.rhs().norm();
        if beta1 == 0.0 {
            let empty = BidiagState {
                m: Matrix::zeros(1, 0),
                u: Matrix::zeros(self.rhs().len(), 0),
                v: Matrix::zeros(r, 0),
                z: Matrix::zeros(r, 0),
                beta1: 0.0,
            };
            return Ok(HybridUpdate {
                alpha: Vector::zeros(r),
                lambda: 0.0,
                state: empty,
            });
        }
        let mut op = self.operator().clone();
        for (j, &s) in linv.iter().enumerate() {
            op.column_mut(j).scale_mut(s);
        }
        let mut state = golub_kahan(&op, self.rhs(), gk_steps)?;
        state.z = Matrix::from_diagonal(linv) * &state.v;
        let (lambda, y) = gcv_projected_solve(&state.m, beta1, lambda_floor);
        let alpha = &state.z * y;
        Ok(HybridUpdate { alpha, lambda, state })
    }
}

/// Hybrid-regularized solve of `min_a ||t - a^T Q||^2` with the reweighted
/// penalty built from `alpha`.
pub fn flexible_hybrid_alpha_update(
    t_vec: &Vector,
    q: &Matrix,
    alpha: &Vector,
    gk_steps: usize,
) -> Result<HybridUpdate> {
    AlphaProblem::from_explicit(t_vec, q)?.hybrid_update(alpha, gk_steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bidiagonal_relation_holds() {
        let a = Matrix::from_fn(7, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 2.5 + if i == j { 3.0 } else { 0.0 });
        let b = Vector::from_fn(7, |i, _| (i as f64).sin());
        let s = golub_kahan(&a, &b, 3).unwrap();
        assert_eq!(s.m.shape(), (4, 3));
        assert!((&a * &s.v - &s.u * &s.m).norm() < 1e-12);
        assert!((s.u.tr_mul(&s.u) - Matrix::identity(4, 4)).norm() < 1e-12);
        assert!((s.v.tr_mul(&s.v) - Matrix::identity(3, 3)).norm() < 1e-12);
        for i in 0..4 {
            for j in 0..3 {
                if i != j && i != j + 1 {
                    assert_eq!(s.m[(i, j)], 0.0);
                }
            }
        }
        assert!((s.u.column(0) * s.beta1 - &b).norm() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero_weights() {
        let q = Matrix::identity(3, 5);
        let t = Vector::zeros(5);
        let out = flexible_hybrid_alpha_update(&t, &q, &Vector::from_element(3, 1.0), 2).unwrap();
        assert!(out.alpha.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_bounds() {
        let q = Matrix::identity(3, 5);
        let t = Vector::from_element(5, 1.0);
        let a = Vector::from_element(3, 1.0);
        assert!(flexible_hybrid_alpha_update(&t, &q, &a, 0).is_err());
        assert!(flexible_hybrid_alpha_update(&t, &q, &a, 4).is_err());
    }
}
