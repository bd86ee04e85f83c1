use std::fmt;
use std::time::Instant;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::als::{factor_mut, kr_gram};
use super::{als, check_rank, AlphaProblem, AlsConfig, SolveTrace, TraceRecord, IRLS_EPSILON};
use crate::error::{Error, Result};
use crate::linalg::solve_gram_right;
use crate::tensor::{factors::uniform_matrix, relative_error, CpFactors, Tensor3};
use crate::{seeded_rng, Vector};

/// Regularization weight of the sparse weight update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    /// Hybrid update with the weight picked by generalized cross validation.
    Auto,
    /// ISTA on the l1 problem with this weight.
    Fixed(f64),
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Auto => s.serialize_str("auto"),
            Lambda::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Lambda;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"auto\" or a nonnegative number")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Lambda, E> {
                if v == "auto" {
                    Ok(Lambda::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Lambda, E> {
                if v >= 0.0 && v.is_finite() {
                    Ok(Lambda::Fixed(v))
                } else {
                    Err(E::invalid_value(de::Unexpected::Float(v), &self))
                }
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Lambda, E> {
                Ok(Lambda::Fixed(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Lambda, E> {
                self.visit_f64(v as f64)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgsConfig {
    /// Upper bound on the rank; every column starts active.
    pub rank_upper: usize,
    pub lambda: Lambda,
    pub tol: f64,
    pub max_iters: usize,
    /// Weights with `|a_r| <= zero_threshold * max |a|` count as zero.
    pub zero_threshold: f64,
    /// Golub-Kahan steps for the hybrid update, clamped to the active rank.
    pub gk_steps: usize,
    pub seed: u64,
    /// ISTA iterations per weight update when `lambda` is fixed.
    pub ista_iters: usize,
    /// Column `r` is penalized with `w_r = m / (|a_r| + reweight_eps * m)`,
    /// `m = max |a|`, taken from the previous iteration.
    pub reweight_eps: f64,
    /// With `lambda = auto` the penalty is bounded below by
    /// `auto_rho * auto_decay^(k-1) * ||T||` at iteration `k`.
    pub auto_rho: f64,
    pub auto_decay: f64,
    /// Below `polish_below * ||T||` the auto penalty is dropped and factors
    /// are refined by plain least squares on the surviving columns.
    pub polish_below: f64,
}

impl Default for PgsConfig {
    fn default() -> Self {
        Self {
            rank_upper: 10,
            lambda: Lambda::Auto,
            tol: 1e-8,
            max_iters: 500,
            zero_threshold: 1e-6,
            gk_steps: 3,
            seed: 42,
            ista_iters: 200,
            reweight_eps: 1.0,
            auto_rho: 0.05,
            auto_decay: 0.98,
            polish_below: 1e-3,
        }
    }
}

impl PgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidArgument("PGS needs tol > 0 and max_iters >= 1".into()));
        }
        if !(self.zero_threshold >= 0.0) {
            return Err(Error::InvalidArgument("zero_threshold must be nonnegative".into()));
        }
        if self.gk_steps == 0 {
            return Err(Error::InvalidArgument("gk_steps must be at least 1".into()));
        }
        if !(self.reweight_eps > 0.0) || !(self.auto_rho >= 0.0) || !(self.auto_decay > 0.0 && self.auto_decay <= 1.0) {
            return Err(Error::InvalidArgument(
                "PGS needs reweight_eps > 0, auto_rho >= 0 and auto_decay in (0, 1]".into(),
            ));
        }
        if let Lambda::Fixed(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PgsResult {
    /// All `rank_upper` columns, unit norm, with pruned weights set to zero.
    pub factors: CpFactors,
    pub rank_estimate: usize,
    pub trace: SolveTrace,
}

impl PgsResult {
    /// The columns with surviving weights.
    pub fn truncated(&self) -> Result<CpFactors> {
        self.factors.select(&self.factors.active_columns())
    }
}

#[derive(Debug, Clone)]
pub struct PgsAlsResult {
    pub pgs: PgsResult,
    pub factors: CpFactors,
    pub trace: SolveTrace,
}

fn prune(alpha: &mut Vector, zero_threshold: f64) {
    let max = alpha.amax();
    for a in alpha.iter_mut() {
        if a.abs() <= zero_threshold * max {
            *a = 0.0;
        }
    }
}

/// Sparse CP decomposition: D-weighted factor least squares alternating with
/// an l1-type weight update; the rank estimate is the number of surviving
/// weights.
pub fn pgs(t: &Tensor3, cfg: &PgsConfig, init: Option<CpFactors>) -> Result<PgsResult> {
    cfg.validate()?;
    check_rank(t, cfg.rank_upper)?;
    let rank = cfg.rank_upper;
    let mut full = match init {
        Some(f) => {
            if f.dims() != t.dims() || f.rank() != rank {
                return Err(Error::Shape(format!(
                    "initial factors {:?} rank {} incompatible with tensor {:?} rank {rank}",
                    f.dims(),
                    f.rank(),
                    t.dims()
                )));
            }
            f
        }
        None => CpFactors::random(t.dims(), rank, &mut seeded_rng(cfg.seed))?,
    };
    full.normalize();
    for a in full.alpha.iter_mut() {
        if *a == 0.0 {
            *a = 1.0;
        }
    }

    let mut trace = SolveTrace::default();
    trace.notes.push(match cfg.lambda {
        Lambda::Fixed(l) => format!(
            "factor columns: reweighted group shrinkage; alpha update: weighted ISTA, lambda={l}, reweight_eps={}",
            cfg.reweight_eps
        ),
        Lambda::Auto => format!(
            "factor columns: reweighted group shrinkage; alpha update: hybrid, Golub-Kahan steps={}, lambda = max(GCV on 30-point log grid [1e-8,1e2]*beta1, {}*{}^(k-1)*||T||), reweight_eps={}",
            cfg.gk_steps, cfg.auto_rho, cfg.auto_decay, cfg.reweight_eps
        ),
    });

    if t.frob_norm() == 0.0 {
        full.alpha.fill(0.0);
        trace.warnings.push("all weights are zero".into());
        trace.records.push(TraceRecord {
            iter: 1,
            rel_error: 0.0,
            lambda: None,
            nnz_alpha: 0,
            alpha: Some(full.alpha.as_slice().to_vec()),
            wall_ms: 0.0,
        });
        return Ok(PgsResult { factors: full, rank_estimate: 0, trace });
    }

    let mut active: Vec<usize> = (0..rank).collect();
    let mut work = full.clone();
    let t_norm = t.frob_norm();
    let start = Instant::now();
    for iter in 1..=cfg.max_iters {
        let lambda = match cfg.lambda {
            Lambda::Fixed(l) => l,
            Lambda::Auto => cfg.auto_rho * cfg.auto_decay.powi(iter as i32 - 1) * t_norm,
        };
        let amax = work.alpha.amax();
        let weights = if amax > 0.0 {
            work.alpha.map(|a| amax / (a.abs() + cfg.reweight_eps * amax))
        } else {
            Vector::from_element(work.rank(), 1.0)
        };
        let polish = matches!(cfg.lambda, Lambda::Auto) && lambda < cfg.polish_below * t_norm;
        for mode in 1..=3 {
            if polish {
                ls_factor(t, &mut work, mode)?;
            } else {
                shrink_factor(t, &mut work, mode, lambda, &weights)?;
            }
        }

        let all: Vec<usize> = (0..work.rank()).collect();
        let problem = AlphaProblem::from_factors(t, &work, &all)?;
        let lambda_used = match cfg.lambda {
            Lambda::Auto if polish => 0.0,
            Lambda::Fixed(_) => {
                work.alpha = problem.solve_weighted_lasso(&work.alpha, lambda, &weights, cfg.ista_iters, 1e-12)?;
                lambda
            }
            Lambda::Auto => {
                // reweighted l2 surrogate of sum_r w_r |a_r|
                let amax = work.alpha.amax().max(f64::MIN_POSITIVE);
                let linv = work
                    .alpha
                    .zip_map(&weights, |a, w| ((a.abs() + IRLS_EPSILON * amax) / w).sqrt());
                let up = problem.hybrid_update_with(&linv, cfg.gk_steps.min(work.rank()), 2.0 * lambda)?;
                work.alpha = up.alpha;
                up.lambda / 2.0
            }
        };
        prune(&mut work.alpha, cfg.zero_threshold);

        // scatter back and drop dead columns from the working set
        for (w, &c) in active.iter().enumerate() {
            full.x.set_column(c, &work.x.column(w));
            full.y.set_column(c, &work.y.column(w));
            full.z.set_column(c, &work.z.column(w));
            full.alpha[c] = work.alpha[w];
        }
        let keep: Vec<usize> = (0..work.rank()).filter(|&w| work.alpha[w] != 0.0).collect();
        let err = relative_error(t, &full)?;
        if !err.is_finite() {
            return Err(Error::Numerical(format!("PGS diverged at iteration {iter}")));
        }
        trace.records.push(TraceRecord {
            iter,
            rel_error: err,
            lambda: Some(lambda_used),
            nnz_alpha: keep.len(),
            alpha: Some(full.alpha.as_slice().to_vec()),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if keep.is_empty() {
            trace.warnings.push(format!("all weights are zero after iteration {iter}"));
            break;
        }
        if keep.len() < work.rank() {
            active = keep.iter().map(|&w| active[w]).collect();
            work = work.select(&keep)?;
        }
        if err < cfg.tol {
            break;
        }
    }

    let rank_estimate = full.active_columns().len();
    Ok(PgsResult { factors: full, rank_estimate, trace })
}

/// Least-squares update of `F D`, split into unit columns and `alpha`.
fn ls_factor(t: &Tensor3, f: &mut CpFactors, mode: usize) -> Result<()> {
    let m = t.mttkrp(&f.x, &f.y, &f.z, mode)?;
    let (mut solved, _) = solve_gram_right(&kr_gram(f, mode), &m)?;
    let old = factor_mut(f, mode).clone();
    for r in 0..f.rank() {
        let n = solved.column(r).norm();
        f.alpha[r] = n;
        if n > 0.0 {
            solved.column_mut(r).unscale_mut(n);
        } else {
            solved.set_column(r, &old.column(r));
        }
    }
    *factor_mut(f, mode) = solved;
    Ok(())
}

/// Exact minimization over each column of `F D` in turn, with the other
/// columns fixed: a group soft threshold of the least-squares column by
/// `lambda * w_r`. Columns come out unit norm with their length in `alpha`;
/// a column shrunk to zero keeps its old direction and gets weight 0.
fn shrink_factor(t: &Tensor3, f: &mut CpFactors, mode: usize, lambda: f64, weights: &Vector) -> Result<()> {
    let m = t.mttkrp(&f.x, &f.y, &f.z, mode)?;
    let g = kr_gram(f, mode);
    let rank = f.rank();
    let mut scaled = factor_mut(f, mode).clone();
    for r in 0..rank {
        scaled.column_mut(r).scale_mut(f.alpha[r]);
    }
    for r in 0..rank {
        let mut v = m.column(r).into_owned();
        for s in 0..rank {
            if s != r && f.alpha[s] != 0.0 {
                v.axpy(-g[(s, r)], &scaled.column(s), 1.0);
            }
        }
        let n = v.norm();
        let tau = lambda * weights[r];
        let keep = if n > tau && g[(r, r)] > 0.0 { (1.0 - tau / n) / g[(r, r)] } else { 0.0 };
        scaled.column_mut(r).copy_from(&(v * keep));
    }
    let old = factor_mut(f, mode).clone();
    for r in 0..rank {
        let n = scaled.column(r).norm();
        f.alpha[r] = n;
        if n > 0.0 {
            scaled.column_mut(r).unscale_mut(n);
        } else {
            scaled.set_column(r, &old.column(r));
        }
    }
    *factor_mut(f, mode) = scaled;
    Ok(())
}

/// Rank from PGS, factors from ALS at rank `R + k - 1`.
pub fn pgs_alsk(t: &Tensor3, k: usize, pgs_cfg: &PgsConfig, als_cfg: &AlsConfig) -> Result<PgsAlsResult> {
    let p = pgs(t, pgs_cfg, None)?;
    pgs_alsk_from(t, p, k, als_cfg)
}

/// As [`pgs_alsk`] but reusing a finished PGS run. ALS starts from the
/// surviving PGS columns (weights folded into X) padded with seeded random
/// columns, and runs with `D = I`.
pub fn pgs_alsk_from(t: &Tensor3, p: PgsResult, k: usize, als_cfg: &AlsConfig) -> Result<PgsAlsResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("PGS+ALSk needs k >= 1".into()));
    }
    let rank = p.rank_estimate + k - 1;
    if rank == 0 {
        return Err(Error::Numerical("PGS found rank 0; nothing to refine with ALS".into()));
    }
    let survivors = p.truncated()?;
    let [ni, nj, nk] = t.dims();
    let mut rng = seeded_rng(als_cfg.seed);
    let pad = rank - survivors.rank();
    let mut x = survivors.x.clone();
    for r in 0..survivors.rank() {
        x.column_mut(r).scale_mut(survivors.alpha[r]);
    }
    let (x, y, z) = if pad > 0 {
        let px = uniform_matrix(ni, pad, &mut rng);
        let py = uniform_matrix(nj, pad, &mut rng);
        let pz = uniform_matrix(nk, pad, &mut rng);
        (
            concat_columns(&x, &px),
            concat_columns(&survivors.y, &py),
            concat_columns(&survivors.z, &pz),
        )
    } else {
        (x, survivors.y.clone(), survivors.z.clone())
    };
    let init = CpFactors::with_unit_weights(x, y, z)?;
    let cfg = AlsConfig { rank, ..als_cfg.clone() };
    let (factors, trace) = als(t, &cfg, Some(init))?;
    Ok(PgsAlsResult { pgs: p, factors, trace })
}

fn concat_columns(a: &crate::Matrix, b: &crate::Matrix) -> crate::Matrix {
    let mut out = crate::Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}
