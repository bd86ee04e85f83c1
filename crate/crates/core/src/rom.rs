//! Galerkin reduction `v = P w` with an orthonormal basis taken from the
//! spatial and temporal CP factors.

use std::path::Path;

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::{CpFactors, Matrix, Vector};

const BASIS_MAGIC: &[u8; 8] = b"RMBASIS1";
/// Singular values below this fraction of the largest are not usable.
const RANK_RATIO: f64 = 1e-13;

/// Where a basis came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BasisSource {
    pub solver: String,
    pub rank_estimate: usize,
    pub factor_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    /// `nx x r`, orthonormal columns.
    pub p: Matrix,
    pub singular_values: Vec<f64>,
    pub source: BasisSource,
}

#[derive(Serialize, Deserialize)]
struct BasisHeader {
    nx: usize,
    r: usize,
    singular_values: Vec<f64>,
    source: BasisSource,
    layout: String,
}

/// Leading `r` left singular vectors of `X diag(alpha) Y^T`, each flipped so
/// its largest-magnitude entry is positive.
pub fn projection_basis(f: &CpFactors, r: usize) -> Result<ReducedModel> {
    if r == 0 {
        return Err(Error::InvalidArgument("reduced dimension must be at least 1".into()));
    }
    let mut xd = f.x.clone();
    for (c, &a) in f.alpha.iter().enumerate() {
        xd.column_mut(c).scale_mut(a);
    }
    let m = &xd * f.y.transpose();
    let limit = m.nrows().min(m.ncols());
    if r > limit {
        return Err(Error::InvalidArgument(format!("r = {r} exceeds min(I, J) = {limit}")));
    }
    let svd = SVD::new(m, true, false);
    let u = svd.u.as_ref().expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let s1 = sigma[0];
    let usable = sigma.iter().filter(|&&s| s1 > 0.0 && s / s1 >= RANK_RATIO).count();
    if r > usable {
        return Err(Error::Numerical(format!(
            "r = {r} exceeds the numerical rank of X diag(alpha) Y^T; usable r <= {usable}"
        )));
    }
    let mut p = Matrix::zeros(u.nrows(), r);
    for (c, &i) in order.iter().take(r).enumerate() {
        let mut col = u.column(i).into_owned();
        let pivot = col.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
        p.set_column(c, &col);
    }
    Ok(ReducedModel {
        p,
        singular_values: sigma,
        source: BasisSource::default(),
    })
}

impl ReducedModel {
    pub fn from_basis(p: Matrix, source: BasisSource) -> Result<Self> {
        let err = (p.tr_mul(&p) - Matrix::identity(p.ncols(), p.ncols())).amax();
        if err > 1e-10 {
            return Err(Error::InvalidArgument(format!("basis is not orthonormal (max |P^T P - I| = {err:.2e})")));
        }
        Ok(Self { p, singular_values: Vec::new(), source })
    }

    pub fn with_source(mut self, source: BasisSource) -> Self {
        self.source = source;
        self
    }

    pub fn nx(&self) -> usize {
        self.p.nrows()
    }

    pub fn r(&self) -> usize {
        self.p.ncols()
    }

    /// `P w`
    pub fn lift(&self, w: &Vector) -> Result<Vector> {
        if w.len() != self.r() {
            return Err(Error::Shape(format!("reduced state has length {}, expected {}", w.len(), self.r())));
        }
        Ok(&self.p * w)
    }

    /// `P^T v`
    pub fn restrict(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.nx() {
            return Err(Error::Shape(format!("state has length {}, expected {}", v.len(), self.nx())));
        }
        Ok(self.p.tr_mul(v))
    }

    /// Lifts every column of an `r x n` matrix.
    pub fn lift_columns(&self, w: &Matrix) -> Result<Matrix> {
        if w.nrows() != self.r() {
            return Err(Error::Shape(format!("reduced states have {} rows, expected {}", w.nrows(), self.r())));
        }
        Ok(&self.p * w)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header = BasisHeader {
            nx: self.nx(),
            r: self.r(),
            singular_values: self.singular_values.clone(),
            source: self.source.clone(),
            layout: "P column-major, f64 little-endian".into(),
        };
        container::write(path, BASIS_MAGIC, &header, self.p.as_slice())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (h, payload): (BasisHeader, Vec<f64>) = container::read(path, BASIS_MAGIC)?;
        if payload.len() != h.nx * h.r {
            return Err(Error::format(path, format!("expected {} doubles, found {}", h.nx * h.r, payload.len())));
        }
        Ok(Self {
            p: Matrix::from_column_slice(h.nx, h.r, &payload),
            singular_values: h.singular_values,
            source: h.source,
        })
    }
}

/// Reduced operators `A_red(w) = P^T A(P w) P` and `B_red = P^T B`.
pub struct ReducedDynamics<'a> {
    rm: &'a ReducedModel,
    assemble_a: Box<dyn Fn(&Vector) -> Result<Matrix> + Send + Sync + 'a>,
    pub b_red: Matrix,
}

impl<'a> ReducedDynamics<'a> {
    pub fn a_red(&self, w: &Vector) -> Result<Matrix> {
        let v = self.rm.lift(w)?;
        let a = (self.assemble_a)(&v)?;
        if a.shape() != (self.rm.nx(), self.rm.nx()) {
            return Err(Error::Shape(format!("assembled A is {:?}, expected {}x{}", a.shape(), self.rm.nx(), self.rm.nx())));
        }
        Ok(self.rm.p.tr_mul(&(a * &self.rm.p)))
    }

    pub fn model(&self) -> &ReducedModel {
        self.rm
    }
}

pub fn reduce_dynamics<'a>(
    rm: &'a ReducedModel,
    assemble_a: impl Fn(&Vector) -> Result<Matrix> + Send + Sync + 'a,
    b: &Matrix,
) -> Result<ReducedDynamics<'a>> {
    if b.nrows() != rm.nx() {
        return Err(Error::InvalidArgument(format!("B has {} rows, expected {}", b.nrows(), rm.nx())));
    }
    Ok(ReducedDynamics {
        rm,
        assemble_a: Box::new(assemble_a),
        b_red: rm.p.tr_mul(b),
    })
}
