//! Sparse CP decomposition of Allen-Cahn snapshot tensors, projection-based
//! model reduction, and state-dependent Riccati feedback.

pub mod ac;
pub mod error;
pub mod cp;
pub mod linalg;
pub mod rom;
pub mod sdre;
pub mod tensor;

mod container;

pub use error::{Error, Result};
pub use tensor::{khatri_rao, CpFactors, Tensor3};

/// Dense column-major matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// The seeded generator used for every random draw in the crate.
pub type SeededRng = rand_pcg::Pcg64;

pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
