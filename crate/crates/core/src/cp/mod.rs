//! CP decomposition: alternating least squares and the sparsity-promoting
//! proximal gradient solver used for rank discovery.

mod alpha;
mod als;
mod hybrid;
mod pgs;
mod trace;

pub use alpha::{ista_alpha_update, soft_threshold, AlphaProblem};
pub use als::{als, als_ls_update, AlsConfig};
pub use hybrid::{
    flexible_hybrid_alpha_update, golub_kahan, BidiagState, HybridUpdate, IRLS_EPSILON,
};
pub use pgs::{pgs, pgs_alsk, pgs_alsk_from, Lambda, PgsAlsResult, PgsConfig, PgsResult};
pub use trace::{SolveTrace, TraceRecord};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Largest admissible CP rank for the least-squares subproblems: `min(IJ, IK, JK)`.
pub fn rank_bound(dims: [usize; 3]) -> usize {
    let [i, j, k] = dims;
    (i * j).min(i * k).min(j * k)
}

pub(crate) fn check_rank(t: &Tensor3, rank: usize) -> Result<()> {
    let bound = rank_bound(t.dims());
    if rank == 0 || rank > bound {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} outside 1..={bound} for tensor {:?}",
            t.dims()
        )));
    }
    Ok(())
}
