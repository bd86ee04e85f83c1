//! The weight subproblem `min_a 1/2 ||t - Q^T a||^2 + penalty(a)`, where row
//! `r` of `Q` is vec(x_r ∘ y_r ∘ z_r).

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::power_iteration_norm;
use crate::tensor::{CpFactors, Tensor3};
use crate::{Matrix, Vector};

/// Power iterations used for the Lipschitz constant `||Q Q^T||_2`.
const LIPSCHITZ_POWER_ITERS: usize = 20;

/// The weight least-squares problem in a form small enough to work with
/// directly: `||Q^T a - t|| = ||A a - b||` for every `a`.
///
/// Built either from an explicit `Q` (then `A = Q^T`, `b = t`) or from CP
/// factors, in which case `A` and `b` are coordinates in an orthonormal basis
/// of `span{t, rows of Q}` and have `R + 1` rows.
#[derive(Debug, Clone)]
pub struct AlphaProblem {
    a: Matrix,
    b: Vector,
}

impl AlphaProblem {
    pub fn from_explicit(t_vec: &Vector, q: &Matrix) -> Result<Self> {
        if q.ncols() != t_vec.len() {
            return Err(Error::Shape(format!(
                "Q has {} columns but t has length {}",
                q.ncols(),
                t_vec.len()
            )));
        }
        Ok(Self {
            a: q.transpose(),
            b: t_vec.clone(),
        })
    }

    /// Compressed problem for the listed factor columns. Only the Gram
    /// matrix `Q Q^T`, the inner products `Q t` and `||t||` are needed.
    pub fn from_factors(t: &Tensor3, f: &CpFactors, columns: &[usize]) -> Result<Self> {
        let sub = f.select(columns)?;
        let gram = sub.rank_one_gram();
        let qt = sub.rank_one_inner(t)?;
        Ok(Self::from_gram(&gram, &qt, t.frob_norm()))
    }

    pub fn from_gram(gram: &Matrix, qt: &Vector, t_norm: f64) -> Self {
        let r = gram.nrows();
        let mut c = Matrix::zeros(r + 1, r + 1);
        c[(0, 0)] = 1.0;
        if t_norm > 0.0 {
            for i in 0..r {
                c[(0, i + 1)] = qt[i] / t_norm;
                c[(i + 1, 0)] = qt[i] / t_norm;
            }
        }
        c.view_mut((1, 1), (r, r)).copy_from(gram);
        let eig = SymmetricEigen::new(c);
        let mut f = eig.eigenvectors.transpose();
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            f.row_mut(i).scale_mut(l.max(0.0).sqrt());
        }
        let b = f.column(0) * t_norm;
        let a = f.columns(1, r).into_owned();
        Self { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn operator(&self) -> &Matrix {
        &self.a
    }

    pub fn rhs(&self) -> &Vector {
        &self.b
    }

    /// `Q Q^T a - Q t`
    pub fn gradient(&self, alpha: &Vector) -> Vector {
        self.a.tr_mul(&(&self.a * alpha - &self.b))
    }

    /// `||Q Q^T||_2` from a fixed number of power iterations.
    pub fn lipschitz(&self) -> f64 {
        power_iteration_norm(&self.a.tr_mul(&self.a), LIPSCHITZ_POWER_ITERS)
    }

    pub fn residual_norm(&self, alpha: &Vector) -> f64 {
        (&self.a * alpha - &self.b).norm()
    }

    pub fn lasso_objective(&self, alpha: &Vector, lambda: f64) -> f64 {
        0.5 * self.residual_norm(alpha).powi(2) + lambda * alpha.lp_norm(1)
    }

    /// One proximal gradient step of length `1 / step`.
    pub fn ista_step(&self, alpha: &Vector, lambda: f64, step: f64) -> Result<Vector> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("ISTA step must be positive, got {step}")));
        }
        let z = alpha - self.gradient(alpha) / step;
        Ok(soft_threshold(&z, lambda / step))
    }

    /// Runs ISTA from `alpha` until the update stalls or `max_iters` steps.
    pub fn solve_lasso(&self, alpha: &Vector, lambda: f64, max_iters: usize, tol: f64) -> Result<Vector> {
        self.solve_weighted_lasso(alpha, lambda, &Vector::from_element(self.dim(), 1.0), max_iters, tol)
    }

    /// ISTA on `1/2 ||A a - b||^2 + lambda * sum_r w_r |a_r|`.
    pub fn solve_weighted_lasso(
        &self,
        alpha: &Vector,
        lambda: f64,
        weights: &Vector,
        max_iters: usize,
        tol: f64,
    ) -> Result<Vector> {
        if weights.len() != self.dim() || alpha.len() != self.dim() {
            return Err(Error::Shape("weights and alpha must match the problem size".into()));
        }
        let step = self.lipschitz();
        if step == 0.0 {
            return Ok(Vector::zeros(self.dim()));
        }
        let mut cur = alpha.clone();
        for _ in 0..max_iters {
            let z = &cur - self.gradient(&cur) / step;
            let next = z.zip_map(weights, |v, w| v.signum() * (v.abs() - lambda * w / step).max(0.0));
            let change = (&next - &cur).norm();
            let scale = next.norm().max(f64::MIN_POSITIVE);
            cur = next;
            if change <= tol * scale {
                break;
            }
        }
        Ok(cur)
    }
}

/// Componentwise `sign(z) * max(|z| - tau, 0)`.
pub fn soft_threshold(z: &Vector, tau: f64) -> Vector {
    z.map(|v| v.signum() * (v.abs() - tau).max(0.0))
}

/// One ISTA step on `min_a 1/2 ||t - a^T Q||^2 + lambda ||a||_1`.
///
/// `q` has one row per CP term (vec(x_r ∘ y_r ∘ z_r) in tensor order). When
/// `step` is `None` it defaults to the Lipschitz bound `||Q Q^T||_2`.
pub fn ista_alpha_update(
    t_vec: &Vector,
    q: &Matrix,
    alpha: &Vector,
    lambda: f64,
    step: Option<f64>,
) -> Result<Vector> {
    if alpha.len() != q.nrows() {
        return Err(Error::Shape(format!(
            "alpha has length {} but Q has {} rows",
            alpha.len(),
            q.nrows()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    let problem = AlphaProblem::from_explicit(t_vec, q)?;
    let step = step.unwrap_or_else(|| problem.lipschitz());
    problem.ista_step(alpha, lambda, step)
}
