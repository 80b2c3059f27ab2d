//! `FLFV` feature files.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "FLFV"
//! 4       2         version (u16 LE) = 1
//! 6       4         count N (u32 LE)
//! 10      4         dim d (u32 LE)
//! 14      1         dtype tag, 0 = float32 LE
//! 15      4·N·d     features, row-major f32
//! ..      4·N       identity ids, u32
//! ..      N         split tags, u8 (0 train, 1 query, 2 gallery)
//! ```

use std::fs;
use std::path::Path;

use super::{DataError, FeatureDataset, Split};
use crate::bytes::{ByteReader, FormatError};
use crate::nn::Matrix;

pub const MAGIC: &[u8; 4] = b"FLFV";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 15;
const DTYPE_F32: u8 = 0;

pub fn encode_feature_file(ds: &FeatureDataset) -> Vec<u8> {
    let n = ds.len();
    let d = ds.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + n * (4 * d + 5));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.push(DTYPE_F32);
    for &v in ds.features().as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &id in ds.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out.extend(ds.splits().iter().map(|s| s.code()));
    out
}

pub fn decode_feature_file(bytes: &[u8]) -> Result<FeatureDataset, DataError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { found: version, supported: VERSION }.into());
    }
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let dtype_at = r.offset();
    let dtype = r.u8()?;
    if dtype != DTYPE_F32 {
        return Err(FormatError::InvalidField { offset: dtype_at, what: format!("dtype tag {dtype}") }.into());
    }
    let expected = n
        .checked_mul(4 * d + 5)
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or(FormatError::InvalidField { offset: 6, what: "count/dim overflow".into() })?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated { offset: bytes.len(), expected, actual: bytes.len() }.into());
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes { offset: expected, extra: bytes.len() - expected }.into());
    }
    let features: Vec<f64> =
        r.take(4 * n * d)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    let ids: Vec<u32> = r.take(4 * n)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let split_base = r.offset();
    let splits = r
        .take(n)?
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            Split::from_code(c)
                .ok_or(FormatError::InvalidField { offset: split_base + i, what: format!("split tag {c}") })
        })
        .collect::<Result<Vec<_>, _>>()?;
    debug_assert_eq!(r.remaining(), 0);
    FeatureDataset::new(Matrix::from_vec(n, d, features), ids, splits)
}

pub fn write_feature_file(ds: &FeatureDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    fs::write(path, encode_feature_file(ds))?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureDataset, DataError> {
    decode_feature_file(&fs::read(path)?)
}
