use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_rank, SolveTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::linalg::solve_gram_right;
use crate::tensor::{relative_error, CpFactors, Tensor3};
use crate::{seeded_rng, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsConfig {
    pub rank: usize,
    /// Stop once the relative error drops below this.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            rank: 2,
            tol: 1e-10,
            max_iters: 500,
            seed: 42,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("ALS tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("ALS max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Least-squares factor update `argmin_F ||unfolding - F kr^T||_F`, solved
/// through the Gram system `F (kr^T kr) = unfolding kr`.
pub fn als_ls_update(unfolding: &Matrix, kr: &Matrix) -> Result<Matrix> {
    if kr.nrows() != unfolding.ncols() {
        return Err(Error::Shape(format!(
            "unfolding has {} columns but Khatri-Rao product has {} rows",
            unfolding.ncols(),
            kr.nrows()
        )));
    }
    let gram = kr.transpose() * kr;
    Ok(solve_gram_right(&gram, &(unfolding * kr))?.0)
}

/// Gram matrix of the Khatri-Rao product of the two factors other than `mode`.
pub(crate) fn kr_gram(f: &CpFactors, mode: usize) -> Matrix {
    let g = |m: &Matrix| m.transpose() * m;
    match mode {
        1 => g(&f.z).component_mul(&g(&f.y)),
        2 => g(&f.z).component_mul(&g(&f.x)),
        _ => g(&f.y).component_mul(&g(&f.x)),
    }
}

pub(crate) fn factor_mut(f: &mut CpFactors, mode: usize) -> &mut Matrix {
    match mode {
        1 => &mut f.x,
        2 => &mut f.y,
        _ => &mut f.z,
    }
}

/// One Gauss-Seidel sweep over the three modes with `D = I`.
pub(crate) fn als_sweep(t: &Tensor3, f: &mut CpFactors) -> Result<()> {
    for mode in 1..=3 {
        let m = t.mttkrp(&f.x, &f.y, &f.z, mode)?;
        let (solved, _) = solve_gram_right(&kr_gram(f, mode), &m)?;
        *factor_mut(f, mode) = solved;
    }
    Ok(())
}

/// CP decomposition by alternating least squares with unit weights.
///
/// Each sweep updates X, then Y, then Z, always using the most recent
/// factors. Iteration stops when the relative error falls below `cfg.tol` or
/// after `cfg.max_iters` sweeps; the error history is not guaranteed to be
/// monotone in floating point but the final value is always recorded.
pub fn als(t: &Tensor3, cfg: &AlsConfig, init: Option<CpFactors>) -> Result<(CpFactors, SolveTrace)> {
    cfg.validate()?;
    check_rank(t, cfg.rank)?;
    let mut f = match init {
        Some(f) => {
            if f.dims() != t.dims() || f.rank() != cfg.rank {
                return Err(Error::Shape(format!(
                    "initial factors {:?} rank {} incompatible with tensor {:?} rank {}",
                    f.dims(),
                    f.rank(),
                    t.dims(),
                    cfg.rank
                )));
            }
            f
        }
        None => CpFactors::random(t.dims(), cfg.rank, &mut seeded_rng(cfg.seed))?,
    };
    f.alpha.fill(1.0);

    let mut trace = SolveTrace::default();
    let start = Instant::now();
    for iter in 1..=cfg.max_iters {
        als_sweep(t, &mut f)?;
        let err = relative_error(t, &f)?;
        if !err.is_finite() {
            return Err(Error::Numerical(format!("ALS diverged at sweep {iter}")));
        }
        trace.records.push(TraceRecord {
            iter,
            rel_error: err,
            lambda: None,
            nnz_alpha: cfg.rank,
            alpha: None,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if err < cfg.tol {
            break;
        }
    }
    Ok((f, trace))
}
