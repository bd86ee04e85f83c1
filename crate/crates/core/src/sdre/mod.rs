//! Algebraic Riccati equations by the matrix sign function and
//! state-dependent Riccati feedback along a trajectory.

mod trajectory;

pub use trajectory::{running_cost, sdre_trajectory, Propagation, SdreOptions, SdreRun, SdreSummary};

use nalgebra::linalg::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{inverse, inverse_with_log_det, lstsq, symmetrize};
use crate::Matrix;

pub const SIGN_MAX_ITERS: usize = 100;
pub const SIGN_TOL: f64 = 1e-12;
/// Relative residual above which Newton-Kleinman refinement runs.
pub const REFINE_ABOVE: f64 = 1e-10;
/// Relative residual that a returned solution must meet.
pub const ACCEPT_BELOW: f64 = 1e-8;
pub const NEWTON_KLEINMAN_STEPS: usize = 2;
/// Distance of sign(A + BK) from -I accepted as a stability certificate.
pub const STABILITY_TOL: f64 = 1e-8;

/// `A^T P + P A + Q - P B R^{-1} B^T P = 0`
///
/// `B R^{-1} B^T` and `R^{-1} B^T` are formed once at construction, so a
/// problem can be reused across many `A` via [`CareProblem::set_a`].
#[derive(Debug, Clone)]
pub struct CareProblem {
    a: Matrix,
    b: Matrix,
    q: Matrix,
    r: Matrix,
    g: Matrix,
    rinv_bt: Matrix,
}

impl CareProblem {
    pub fn new(a: Matrix, b: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
            return Err(Error::Shape(format!(
                "CARE shapes A {:?}, B {:?}, Q {:?}, R {:?} are inconsistent",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape()
            )));
        }
        for (name, m) in [("Q", &q), ("R", &r)] {
            let asym = (m - m.transpose()).amax();
            if asym > 1e-12 * m.amax().max(1.0) {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric (max asymmetry {asym:.2e})")));
            }
        }
        let ch = Cholesky::new(r.clone()).ok_or_else(|| Error::InvalidArgument("R is not positive definite".into()))?;
        let rinv_bt = ch.solve(&b.transpose());
        let g = &b * &rinv_bt;
        Ok(Self { a, b, q, r, g, rinv_bt })
    }

    /// Replaces `A`, keeping `B`, `Q`, `R`.
    pub fn set_a(&mut self, a: Matrix) -> Result<()> {
        if a.shape() != self.a.shape() {
            return Err(Error::Shape(format!("A is {:?}, expected {:?}", a.shape(), self.a.shape())));
        }
        self.a = a;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// `-R^{-1} B^T P`
    pub fn gain(&self, pi: &Matrix) -> Matrix {
        -(&self.rinv_bt * pi)
    }

    /// Frobenius norm of the Riccati residual at `pi`.
    pub fn residual(&self, pi: &Matrix) -> f64 {
        let at_pi = self.a.transpose() * pi;
        (&at_pi + at_pi.transpose() + &self.q - pi * &self.g * pi).norm()
    }

    /// Scale used for relative residual tests: `||A|| ||P|| + ||Q||`.
    pub fn residual_scale(&self, pi: &Matrix) -> f64 {
        (self.a.norm() * pi.norm() + self.q.norm()).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct CareSolution {
    pub pi: Matrix,
    pub k: Matrix,
    pub residual: f64,
    pub stable: bool,
    pub sign_iterations: usize,
    pub newton_steps: usize,
}

/// Matrix sign function by the scaled Newton iteration
/// `Z <- (cZ + (cZ)^{-1}) / 2`, `c = |det Z|^{-1/n}`. Scaling is switched off
/// once the iteration is in its quadratic phase.
pub fn matrix_sign(m: &Matrix) -> Result<(Matrix, usize)> {
    let n = m.nrows() as f64;
    let mut z = m.clone();
    let mut scaled = true;
    let mut last_change = f64::INFINITY;
    for it in 1..=SIGN_MAX_ITERS {
        let (inv, log_det) = inverse_with_log_det(&z, "sign iteration")?;
        let c = if scaled { (-log_det / n).exp() } else { 1.0 };
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm();
        let size = z.norm();
        z = next;
        last_change = change / size;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("sign iteration".into()));
        }
        if last_change < SIGN_TOL {
            return Ok((z, it));
        }
        if last_change < 1e-2 {
            scaled = false;
        }
    }
    Err(Error::SignNotConverged {
        iterations: SIGN_MAX_ITERS,
        last_change,
    })
}

/// Stabilizing solution of the CARE.
pub fn solve_care(p: &CareProblem) -> Result<CareSolution> {
    let n = p.n();
    let g = &p.g;
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&p.a);
    h.view_mut((0, n), (n, n)).copy_from(&(-g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&p.q));
    h.view_mut((n, n), (n, n)).copy_from(&(-p.a.transpose()));
    let (w, sign_iterations) = matrix_sign(&h)?;

    // [W12; W22 + I] P = -[W11 + I; W21]
    let eye = Matrix::identity(n, n);
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &eye));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let mut pi = symmetrize(&lstsq(&lhs, &rhs)?);
    let mut residual = p.residual(&pi);

    let mut newton_steps = 0;
    if residual > REFINE_ABOVE * p.residual_scale(&pi) {
        for _ in 0..NEWTON_KLEINMAN_STEPS {
            let Ok(next) = newton_kleinman_step(p, &pi) else { break };
            let r = p.residual(&next);
            newton_steps += 1;
            if r < residual {
                pi = next;
                residual = r;
            }
        }
    }
    if !(residual <= ACCEPT_BELOW * p.residual_scale(&pi)) {
        return Err(Error::Numerical(format!(
            "CARE residual {residual:.3e} above {ACCEPT_BELOW:e} * (||A|| ||P|| + ||Q||)"
        )));
    }
    let k = p.gain(&pi);
    let closed = &p.a + &p.b * &k;
    let stable = matches!(stability_margin_of(&closed)?.verdict, Verdict::Stable);
    Ok(CareSolution {
        pi,
        k,
        residual,
        stable,
        sign_iterations,
        newton_steps,
    })
}

/// One Newton-Kleinman step from a stabilizing `pi`.
fn newton_kleinman_step(p: &CareProblem, pi: &Matrix) -> Result<Matrix> {
    let k = p.gain(pi);
    let f = &p.a + &p.b * &k;
    let c = &p.q + k.transpose() * &p.r * &k;
    lyapunov(&f, &c)
}

/// Solves `F^T X + X F + C = 0` for stable `F` by the sign-function
/// iteration on the pair `(F, C)`.
pub fn lyapunov(f: &Matrix, c: &Matrix) -> Result<Matrix> {
    let n = f.nrows() as f64;
    let mut fk = f.clone();
    let mut ck = c.clone();
    let mut scaled = true;
    let mut last_change = f64::INFINITY;
    for _ in 0..SIGN_MAX_ITERS {
        let (inv, log_det) = inverse_with_log_det(&fk, "Lyapunov sign iteration")?;
        let s = if scaled { (-log_det / n).exp() } else { 1.0 };
        let next_f = (&fk * s + &inv / s) * 0.5;
        ck = (&ck * s + inv.transpose() * &ck * &inv / s) * 0.5;
        let change = (&next_f - &fk).norm() / fk.norm();
        fk = next_f;
        last_change = change;
        if change < SIGN_TOL {
            return Ok(symmetrize(&(ck * 0.5)));
        }
        if change < 1e-2 {
            scaled = false;
        }
    }
    Err(Error::SignNotConverged {
        iterations: SIGN_MAX_ITERS,
        last_change,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    /// The sign iteration broke down or the checks disagree.
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub verdict: Verdict,
    /// `max |sign(A + BK) + I|`, when the iteration converged.
    pub distance: Option<f64>,
    pub iterations: usize,
    /// Trace/determinant test for systems of size at most 2.
    pub routh_hurwitz: Option<bool>,
}

/// Whether all eigenvalues of `A + BK` lie in the open left half plane,
/// certified by `sign(A + BK) = -I`.
pub fn stability_margin(a: &Matrix, b: &Matrix, k: &Matrix) -> Result<StabilityCertificate> {
    if a.nrows() != a.ncols() || b.nrows() != a.nrows() || k.shape() != (b.ncols(), a.nrows()) {
        return Err(Error::Shape(format!(
            "stability check shapes A {:?}, B {:?}, K {:?}",
            a.shape(),
            b.shape(),
            k.shape()
        )));
    }
    stability_margin_of(&(a + b * k))
}

fn stability_margin_of(m: &Matrix) -> Result<StabilityCertificate> {
    let n = m.nrows();
    let routh_hurwitz = match n {
        1 => Some(m[(0, 0)] < 0.0),
        2 => Some(m.trace() < 0.0 && m.determinant() > 0.0),
        _ => None,
    };
    let (verdict, distance, iterations) = match matrix_sign(m) {
        Ok((s, it)) => {
            let d = (&s + Matrix::identity(n, n)).amax();
            (if d <= STABILITY_TOL { Verdict::Stable } else { Verdict::Unstable }, Some(d), it)
        }
        Err(_) => (Verdict::Indeterminate, None, 0),
    };
    let verdict = match (verdict, routh_hurwitz) {
        (Verdict::Stable, Some(false)) | (Verdict::Unstable, Some(true)) => Verdict::Indeterminate,
        (v, _) => v,
    };
    Ok(StabilityCertificate {
        verdict,
        distance,
        iterations,
        routh_hurwitz,
    })
}

/// `K = -R^{-1} B^T P`, exposed for callers holding a Riccati solution.
pub fn feedback_gain(b: &Matrix, r: &Matrix, pi: &Matrix) -> Result<Matrix> {
    Ok(-inverse(r, "R")? * b.transpose() * pi)
}
