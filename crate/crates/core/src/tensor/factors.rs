use std::path::Path;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Tensor3;
use crate::container;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Factor matrices and weights of a CP model `sum_r alpha_r x_r ∘ y_r ∘ z_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    pub x: Matrix,
    pub y: Matrix,
    pub z: Matrix,
    pub alpha: Vector,
}

#[derive(Serialize, Deserialize)]
struct FactorsHeader {
    dims: [usize; 3],
    rank: usize,
    layout: String,
}

const FACTORS_MAGIC: &[u8; 8] = b"CPFACTR1";

impl CpFactors {
    pub fn new(x: Matrix, y: Matrix, z: Matrix, alpha: Vector) -> Result<Self> {
        let rank = x.ncols();
        if rank == 0 {
            return Err(Error::InvalidArgument("CP rank must be at least 1".into()));
        }
        if y.ncols() != rank || z.ncols() != rank || alpha.len() != rank {
            return Err(Error::Shape(format!(
                "factor column counts ({}, {}, {}) and weight length {} disagree",
                rank,
                y.ncols(),
                z.ncols(),
                alpha.len()
            )));
        }
        let all = x.iter().chain(y.iter()).chain(z.iter()).chain(alpha.iter());
        if let Some(index) = all.clone().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { x, y, z, alpha })
    }

    /// Factors with `D = I`.
    pub fn with_unit_weights(x: Matrix, y: Matrix, z: Matrix) -> Result<Self> {
        let rank = x.ncols();
        Self::new(x, y, z, Vector::from_element(rank, 1.0))
    }

    /// Entries i.i.d. uniform on `(-1, 1)`, unit weights.
    pub fn random<R: Rng>(dims: [usize; 3], rank: usize, rng: &mut R) -> Result<Self> {
        let x = uniform_matrix(dims[0], rank, rng);
        let y = uniform_matrix(dims[1], rank, rng);
        let z = uniform_matrix(dims[2], rank, rng);
        Self::with_unit_weights(x, y, z)
    }

    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.x.nrows(), self.y.nrows(), self.z.nrows()]
    }

    pub fn reconstruct(&self) -> Tensor3 {
        let [ni, nj, nk] = self.dims();
        let rank = self.rank();
        let mut data = vec![0.0; ni * nj * nk];
        let mut w = vec![0.0; rank];
        for k in 0..nk {
            for j in 0..nj {
                for (r, wr) in w.iter_mut().enumerate() {
                    *wr = self.alpha[r] * self.y[(j, r)] * self.z[(k, r)];
                }
                let start = ni * (j + nj * k);
                let fiber = &mut data[start..start + ni];
                for (r, &wr) in w.iter().enumerate() {
                    if wr == 0.0 {
                        continue;
                    }
                    let xr = &self.x.as_slice()[r * ni..(r + 1) * ni];
                    for (f, xv) in fiber.iter_mut().zip(xr) {
                        *f += wr * xv;
                    }
                }
            }
        }
        Tensor3::new([ni, nj, nk], data).expect("finite factors give finite tensor")
    }

    /// `Q Q^T` where row `r` of `Q` is vec(x_r ∘ y_r ∘ z_r): the Hadamard
    /// product of the three factor Gram matrices.
    pub fn rank_one_gram(&self) -> Matrix {
        let gx = self.x.transpose() * &self.x;
        let gy = self.y.transpose() * &self.y;
        let gz = self.z.transpose() * &self.z;
        gx.component_mul(&gy).component_mul(&gz)
    }

    /// `Q t`: inner products of the tensor with each rank-one term.
    pub fn rank_one_inner(&self, t: &Tensor3) -> Result<Vector> {
        let m3 = t.mttkrp(&self.x, &self.y, &self.z, 3)?;
        Ok(Vector::from_iterator(
            self.rank(),
            (0..self.rank()).map(|r| m3.column(r).dot(&self.z.column(r))),
        ))
    }

    /// Rescales every factor column to unit norm and absorbs the scale into
    /// `alpha`. Zero columns are left alone.
    pub fn normalize(&mut self) {
        for r in 0..self.rank() {
            let mut scale = 1.0;
            for m in [&mut self.x, &mut self.y, &mut self.z] {
                let n = m.column(r).norm();
                if n > 0.0 {
                    m.column_mut(r).unscale_mut(n);
                    scale *= n;
                }
            }
            self.alpha[r] *= scale;
        }
    }

    /// Keeps the listed columns, in order.
    pub fn select(&self, columns: &[usize]) -> Result<CpFactors> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.rank()) {
            return Err(Error::InvalidArgument(format!(
                "column {bad} out of range for rank {}",
                self.rank()
            )));
        }
        CpFactors::new(
            self.x.select_columns(columns),
            self.y.select_columns(columns),
            self.z.select_columns(columns),
            Vector::from_iterator(columns.len(), columns.iter().map(|&c| self.alpha[c])),
        )
    }

    /// Column indices with nonzero weight.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.rank()).filter(|&r| self.alpha[r] != 0.0).collect()
    }

    fn payload(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len() + self.y.len() + self.z.len() + self.rank());
        out.extend_from_slice(self.x.as_slice());
        out.extend_from_slice(self.y.as_slice());
        out.extend_from_slice(self.z.as_slice());
        out.extend_from_slice(self.alpha.as_slice());
        out
    }

    /// SHA-256 of the little-endian payload, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in self.dims() {
            h.update((d as u64).to_le_bytes());
        }
        for v in self.payload() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes a JSON header followed by X, Y, Z (column-major) and alpha as
    /// little-endian doubles.
    pub fn write(&self, path: &Path) -> Result<()> {
        let header = FactorsHeader {
            dims: self.dims(),
            rank: self.rank(),
            layout: "x,y,z column-major then alpha; f64 little-endian".into(),
        };
        container::write(path, FACTORS_MAGIC, &header, &self.payload())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, payload): (FactorsHeader, Vec<f64>) = container::read(path, FACTORS_MAGIC)?;
        let [ni, nj, nk] = header.dims;
        let r = header.rank;
        let expected = (ni + nj + nk + 1) * r;
        if payload.len() != expected {
            return Err(Error::format(
                path,
                format!("expected {expected} doubles, found {}", payload.len()),
            ));
        }
        let (xs, rest) = payload.split_at(ni * r);
        let (ys, rest) = rest.split_at(nj * r);
        let (zs, al) = rest.split_at(nk * r);
        CpFactors::new(
            Matrix::from_column_slice(ni, r, xs),
            Matrix::from_column_slice(nj, r, ys),
            Matrix::from_column_slice(nk, r, zs),
            Vector::from_column_slice(al),
        )
    }
}

pub(crate) fn uniform_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    m
}

/// `||t - reconstruct(f)||_F / ||t||_F`; the absolute error when `t` is zero.
pub fn relative_error(t: &Tensor3, f: &CpFactors) -> Result<f64> {
    if t.dims() != f.dims() {
        return Err(Error::Shape(format!(
            "tensor {:?} vs factors {:?}",
            t.dims(),
            f.dims()
        )));
    }
    let [ni, nj, nk] = t.dims();
    let rank = f.rank();
    let mut w = vec![0.0; rank];
    let mut fiber = vec![0.0; ni];
    let mut err2 = 0.0;
    for k in 0..nk {
        for j in 0..nj {
            for (r, wr) in w.iter_mut().enumerate() {
                *wr = f.alpha[r] * f.y[(j, r)] * f.z[(k, r)];
            }
            let start = ni * (j + nj * k);
            fiber.copy_from_slice(&t.data()[start..start + ni]);
            for (r, &wr) in w.iter().enumerate() {
                if wr == 0.0 {
                    continue;
                }
                let xr = &f.x.as_slice()[r * ni..(r + 1) * ni];
                for (e, xv) in fiber.iter_mut().zip(xr) {
                    *e -= wr * xv;
                }
            }
            err2 += fiber.iter().map(|e| e * e).sum::<f64>();
        }
    }
    let norm = t.frob_norm();
    let err = err2.sqrt();
    Ok(if norm > 0.0 { err / norm } else { err })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_outer_product() {
        let f = CpFactors::new(
            Matrix::from_column_slice(2, 1, &[1., 0.]),
            Matrix::from_column_slice(2, 1, &[1., 1.]),
            Matrix::from_column_slice(1, 1, &[1.]),
            Vector::from_element(1, 2.0),
        )
        .unwrap();
        let t = f.reconstruct();
        assert_eq!(t.dims(), [2, 2, 1]);
        assert_eq!(t.frontal_slice(0), Matrix::from_row_slice(2, 2, &[2., 2., 0., 0.]));
        assert_eq!(relative_error(&t, &f).unwrap(), 0.0);
    }

    #[test]
    fn zero_weights_give_zero_tensor() {
        let mut rng = crate::seeded_rng(3);
        let mut f = CpFactors::random([3, 4, 2], 2, &mut rng).unwrap();
        f.alpha.fill(0.0);
        assert!(f.reconstruct().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_tensor_against_zero_factors() {
        let mut t = vec![0.0; 8];
        t[0] = 1.0;
        let t = Tensor3::new([2, 2, 2], t).unwrap();
        let f = CpFactors::with_unit_weights(
            Matrix::zeros(2, 1),
            Matrix::zeros(2, 1),
            Matrix::zeros(2, 1),
        )
        .unwrap();
        assert_eq!(relative_error(&t, &f).unwrap(), 1.0);
    }

    #[test]
    fn shape_validation() {
        let bad = CpFactors::new(
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 1),
            Matrix::zeros(2, 2),
            Vector::zeros(2),
        );
        assert!(bad.is_err());
        let bad = CpFactors::new(
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 2),
            Vector::zeros(3),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn gram_and_inner_match_explicit_q() {
        let mut rng = crate::seeded_rng(11);
        let mut f = CpFactors::random([3, 4, 5], 3, &mut rng).unwrap();
        f.alpha = Vector::from_column_slice(&[0.5, -1.0, 2.0]);
        let t = CpFactors::random([3, 4, 5], 2, &mut rng).unwrap().reconstruct();
        let q = Matrix::from_fn(3, 60, |r, idx| {
            let i = idx % 3;
            let j = (idx / 3) % 4;
            let k = idx / 12;
            f.x[(i, r)] * f.y[(j, r)] * f.z[(k, r)]
        });
        let g = f.rank_one_gram();
        assert!((g - &q * q.transpose()).norm() < 1e-12);
        let qt = f.rank_one_inner(&t).unwrap();
        let tv = Vector::from_column_slice(t.data());
        assert!((qt - &q * tv).norm() < 1e-12);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("cpf-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = crate::seeded_rng(5);
        let f = CpFactors::random([4, 3, 2], 2, &mut rng).unwrap();
        let p = dir.join("f.cpf");
        f.write(&p).unwrap();
        let g = CpFactors::read(&p).unwrap();
        assert_eq!(f, g);
        assert_eq!(f.content_hash(), g.content_hash());
        std::fs::remove_dir_all(&dir).ok();
    }
}
