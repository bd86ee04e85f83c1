//! Binary container used for factor and basis files: an 8-byte magic, a
//! little-endian `u64` header length, a UTF-8 JSON header, then raw
//! little-endian doubles.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn write<H: Serialize>(path: &Path, magic: &[u8; 8], header: &H, payload: &[f64]) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::format(path, e.to_string()))?;
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * payload.len());
    bytes.extend_from_slice(magic);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(H, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(Error::format(
            path,
            format!("missing {} magic", String::from_utf8_lossy(magic)),
        ));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes
        .get(16..)
        .filter(|b| b.len() >= hlen)
        .ok_or_else(|| Error::format(path, "truncated header"))?;
    let header: H =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::format(path, e.to_string()))?;
    let raw = &body[hlen..];
    if raw.len() % 8 != 0 {
        return Err(Error::format(path, "payload is not a whole number of doubles"));
    }
    let payload = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, payload))
}
