use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_from, AcConfig};
use crate::error::{Error, Result};
use crate::{seeded_rng, Tensor3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    pub ac: AcConfig,
    pub n_beta: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub seed: u64,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self {
            ac: AcConfig::default(),
            n_beta: 50,
            beta_min: -100.0,
            beta_max: 100.0,
            seed: 42,
        }
    }
}

impl SnapshotConfig {
    pub fn validate(&self) -> Result<()> {
        self.ac.validate()?;
        if self.n_beta == 0 {
            return Err(Error::InvalidArgument("n_beta must be at least 1".into()));
        }
        if !(self.beta_max >= self.beta_min) || !self.beta_min.is_finite() || !self.beta_max.is_finite() {
            return Err(Error::InvalidArgument("need finite beta_min <= beta_max".into()));
        }
        Ok(())
    }

    /// The seeded control strengths, in slice order.
    pub fn sample_betas(&self) -> Vec<f64> {
        let mut rng = seeded_rng(self.seed);
        (0..self.n_beta)
            .map(|_| {
                if self.beta_max > self.beta_min {
                    rng.random_range(self.beta_min..self.beta_max)
                } else {
                    self.beta_min
                }
            })
            .collect()
    }
}

/// Provenance written next to a snapshot tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub betas: Vec<f64>,
    pub config: SnapshotConfig,
    pub seed: u64,
    /// Semi-implicit substeps per output interval, one per slice.
    pub substeps: Vec<usize>,
}

/// Stacks `simulate(cfg.ac, beta_k)` as frontal slices `k`. Slices are
/// computed on the current rayon pool; placement is by index so the result
/// does not depend on scheduling.
pub fn build_snapshot_tensor(cfg: &SnapshotConfig) -> Result<(Tensor3, SnapshotMeta)> {
    cfg.validate()?;
    let v0 = cfg.ac.initial_condition()?;
    let betas = cfg.sample_betas();
    let slices = betas
        .par_iter()
        .map(|&b| {
            simulate_from(&cfg.ac, &v0, Some(b)).map_err(|e| Error::Numerical(format!("simulation with beta = {b}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let tensor = Tensor3::from_frontal_slices(&slices)?;
    let meta = SnapshotMeta {
        substeps: betas.iter().map(|&b| cfg.ac.substeps(b)).collect(),
        betas,
        config: cfg.clone(),
        seed: cfg.seed,
    };
    Ok((tensor, meta))
}
