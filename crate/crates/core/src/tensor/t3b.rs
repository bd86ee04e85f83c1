//! `T3B` files: magic `T3BINARY`, dims `I, J, K` as little-endian `u64`,
//! then `I*J*K` little-endian doubles in mode-1 fiber order.

use std::fs;
use std::path::Path;

use super::Tensor3;
use crate::error::{Error, Result};

pub const T3B_MAGIC: &[u8; 8] = b"T3BINARY";

impl Tensor3 {
    pub fn to_t3b_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.len());
        out.extend_from_slice(T3B_MAGIC);
        for d in self.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in self.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a `T3B` buffer; `source` only labels errors.
    pub fn from_t3b_bytes(bytes: &[u8], source: &Path) -> Result<Self> {
        if bytes.len() < 32 || &bytes[..8] != T3B_MAGIC {
            return Err(Error::format(source, "not a T3B file (bad magic or short header)"));
        }
        let mut dims = [0usize; 3];
        for (n, d) in dims.iter_mut().enumerate() {
            let raw = u64::from_le_bytes(bytes[8 + 8 * n..16 + 8 * n].try_into().unwrap());
            *d = usize::try_from(raw).map_err(|_| Error::format(source, "dimension overflow"))?;
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::format(source, "dimension overflow"))?;
        let body = &bytes[32..];
        if body.len() != count {
            return Err(Error::format(
                source,
                format!(
                    "dims {dims:?} need {count} payload bytes, found {}",
                    body.len()
                ),
            ));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor3::new(dims, data).map_err(|e| Error::format(source, e.to_string()))
    }
}

pub fn write_t3b(path: &Path, t: &Tensor3) -> Result<()> {
    fs::write(path, t.to_t3b_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_t3b(path: &Path) -> Result<Tensor3> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor3::from_t3b_bytes(&bytes, path)
}
