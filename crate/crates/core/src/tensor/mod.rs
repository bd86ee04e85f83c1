//! Dense third-order tensors, matricization and CP algebra.
//!
//! Storage follows the mode-1 fiber convention: element `(i, j, k)` of an
//! `I x J x K` tensor lives at linear index `i + I * (j + J * k)`. With that
//! layout the mode-1 unfolding is the raw buffer read as a column-major
//! `I x JK` matrix.
//!
//! Unfoldings order the remaining indices increasingly, so that
//!
//! ```text
//! T(1) = X D (Z ⊙ Y)^T,   T(2) = Y D (Z ⊙ X)^T,   T(3) = Z D (Y ⊙ X)^T
//! ```
//!
//! with `⊙` the column-wise Kronecker (Khatri-Rao) product of [`khatri_rao`].

pub(crate) mod factors;
mod t3b;

pub use factors::{relative_error, CpFactors};
pub use t3b::{read_t3b, write_t3b, T3B_MAGIC};

use crate::error::{Error, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    /// Builds a tensor from a buffer in mode-1 fiber order. Rejects zero
    /// dimensions, length mismatches and non-finite entries.
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {dims:?}"
            )));
        }
        let len = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidArgument(format!("dimensions {dims:?} overflow")))?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "data length {} does not match {}x{}x{} = {len}",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![0.0; len])
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let [ni, nj, nk] = dims;
        let mut data = Vec::with_capacity(ni * nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, data)
    }

    /// Stacks equally shaped `I x J` matrices as frontal slices `T(:, :, k)`.
    pub fn from_frontal_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no slices given".into()))?;
        let (ni, nj) = first.shape();
        let mut data = Vec::with_capacity(ni * nj * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (ni, nj) {
                return Err(Error::Shape(format!(
                    "slice {k} is {:?}, expected {:?}",
                    s.shape(),
                    (ni, nj)
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::new([ni, nj, slices.len()], data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    /// Frontal slice `T(:, :, k)` as an `I x J` matrix.
    pub fn frontal_slice(&self, k: usize) -> Matrix {
        let [ni, nj, _] = self.dims;
        let start = k * ni * nj;
        Matrix::from_column_slice(ni, nj, &self.data[start..start + ni * nj])
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mode-`mode` matricization, `mode` in `1..=3`.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        let [ni, nj, nk] = self.dims;
        match mode {
            1 => Ok(Matrix::from_column_slice(ni, nj * nk, &self.data)),
            2 => {
                let mut m = Matrix::zeros(nj, ni * nk);
                for k in 0..nk {
                    for j in 0..nj {
                        for i in 0..ni {
                            m[(j, i + ni * k)] = self.get(i, j, k);
                        }
                    }
                }
                Ok(m)
            }
            3 => {
                let mut m = Matrix::zeros(nk, ni * nj);
                for k in 0..nk {
                    for j in 0..nj {
                        for i in 0..ni {
                            m[(k, i + ni * j)] = self.get(i, j, k);
                        }
                    }
                }
                Ok(m)
            }
            _ => Err(invalid_mode(mode)),
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &Matrix, mode: usize, dims: [usize; 3]) -> Result<Self> {
        let [ni, nj, nk] = dims;
        let expected = match mode {
            1 => (ni, nj * nk),
            2 => (nj, ni * nk),
            3 => (nk, ni * nj),
            _ => return Err(invalid_mode(mode)),
        };
        if m.shape() != expected {
            return Err(Error::Shape(format!(
                "mode-{mode} unfolding of {dims:?} must be {expected:?}, got {:?}",
                m.shape()
            )));
        }
        match mode {
            1 => Self::new(dims, m.as_slice().to_vec()),
            2 => Self::from_fn(dims, |i, j, k| m[(j, i + ni * k)]),
            _ => Self::from_fn(dims, |i, j, k| m[(k, i + ni * j)]),
        }
    }

    /// Matricized tensor times Khatri-Rao product, `T(n) * KR` where `KR`
    /// is `Z ⊙ Y`, `Z ⊙ X` or `Y ⊙ X` for modes 1, 2, 3. The Khatri-Rao
    /// product is never formed.
    pub fn mttkrp(&self, x: &Matrix, y: &Matrix, z: &Matrix, mode: usize) -> Result<Matrix> {
        let [ni, nj, nk] = self.dims;
        let rank = x.ncols();
        if y.ncols() != rank || z.ncols() != rank {
            return Err(Error::Shape("factor matrices differ in column count".into()));
        }
        if x.nrows() != ni || y.nrows() != nj || z.nrows() != nk {
            return Err(Error::Shape(format!(
                "factor rows ({}, {}, {}) do not match tensor {:?}",
                x.nrows(),
                y.nrows(),
                z.nrows(),
                self.dims
            )));
        }
        match mode {
            1 => {
                let mut out = Matrix::zeros(ni, rank);
                let mut w = vec![0.0; rank];
                for k in 0..nk {
                    for j in 0..nj {
                        let start = ni * (j + nj * k);
                        let fiber = &self.data[start..start + ni];
                        for (r, wr) in w.iter_mut().enumerate() {
                            *wr = y[(j, r)] * z[(k, r)];
                        }
                        for (r, &wr) in w.iter().enumerate() {
                            let col = &mut out.as_mut_slice()[r * ni..(r + 1) * ni];
                            for (o, f) in col.iter_mut().zip(fiber) {
                                *o += wr * f;
                            }
                        }
                    }
                }
                Ok(out)
            }
            2 | 3 => {
                let mut out = Matrix::zeros(if mode == 2 { nj } else { nk }, rank);
                for k in 0..nk {
                    for j in 0..nj {
                        let start = ni * (j + nj * k);
                        let fiber = &self.data[start..start + ni];
                        for r in 0..rank {
                            let xr = &x.as_slice()[r * ni..(r + 1) * ni];
                            let d: f64 = fiber.iter().zip(xr).map(|(a, b)| a * b).sum();
                            if mode == 2 {
                                out[(j, r)] += d * z[(k, r)];
                            } else {
                                out[(k, r)] += d * y[(j, r)];
                            }
                        }
                    }
                }
                Ok(out)
            }
            _ => Err(invalid_mode(mode)),
        }
    }

    /// Entrywise difference `self - other`.
    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "cannot subtract {:?} from {:?}",
                other.dims, self.dims
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Tensor3::new(self.dims, data)
    }
}

fn invalid_mode(mode: usize) -> Error {
    Error::InvalidArgument(format!("mode must be 1, 2 or 3, got {mode}"))
}

/// Column-wise Kronecker product. Column `r` of the result is
/// `kron(a[:, r], b[:, r])`, so row `p * b.nrows() + q` holds `a[p, r] * b[q, r]`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "khatri_rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (ra, rb) = (a.nrows(), b.nrows());
    let mut out = Matrix::zeros(ra * rb, a.ncols());
    for r in 0..a.ncols() {
        for p in 0..ra {
            let s = a[(p, r)];
            for q in 0..rb {
                out[(p * rb + q, r)] = s * b[(q, r)];
            }
        }
    }
    Ok(out)
}
