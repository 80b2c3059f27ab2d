//! `FLNN` model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "FLNN"
//! version      u16      = 1
//! layer_count  u32
//! per layer:
//!   in         u32
//!   out        u32
//!   activation u8       0 identity, 1 relu, 2 leaky_relu
//!   weights    out*in   f64, row-major [out × in]
//!   bias       out      f64
//! ```

use std::io::{Read, Write};

use super::{Activation, DenseLayer, Matrix, MlpModel, NnError};
use crate::bytes::{ByteReader, FormatError};

pub const MAGIC: &[u8; 4] = b"FLNN";
pub const VERSION: u16 = 1;

pub fn encode_checkpoint(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + model.param_count() * 8 + model.layers().len() * 9);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        out.push(layer.activation.id());
        for w in layer.weights.as_slice() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

/// Parses one checkpoint from the front of `bytes`, returning the model and the
/// number of bytes consumed.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(MlpModel, usize), NnError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { found: version, supported: VERSION }.into());
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let offset = r.offset();
        let id = r.u8()?;
        let activation =
            Activation::from_id(id).ok_or(FormatError::InvalidField { offset, what: format!("activation id {id}") })?;
        let weights = r.f64_vec(in_dim * out_dim)?;
        let bias = r.f64_vec(out_dim)?;
        layers.push(DenseLayer { weights: Matrix::from_vec(out_dim, in_dim, weights), bias, activation });
    }
    Ok((MlpModel::from_layers(layers)?, r.offset()))
}

pub fn write_checkpoint<W: Write>(model: &MlpModel, mut w: W) -> Result<(), NnError> {
    w.write_all(&encode_checkpoint(model))?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<MlpModel, NnError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let (model, used) = decode_checkpoint(&bytes)?;
    if used != bytes.len() {
        return Err(FormatError::TrailingBytes { offset: used, extra: bytes.len() - used }.into());
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn roundtrip_and_layout() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = MlpModel::new(&[3, 2, 4], Activation::LeakyRelu, Activation::Identity, &mut rng).unwrap();
        let bytes = encode_checkpoint(&m);
        assert_eq!(&bytes[..4], b"FLNN");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        // header + 2 layers × (9 + params·8)
        assert_eq!(bytes.len(), 10 + (9 + 8 * 8) + (9 + 12 * 8));
        assert_eq!(bytes[18], 2); // first activation id
        let back = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = MlpModel::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let bytes = encode_checkpoint(&m);
        let err = read_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, NnError::Format(FormatError::Truncated { .. })), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad[..]).unwrap_err(), NnError::Format(FormatError::BadMagic { .. })));
        let mut bad = bytes;
        bad[4] = 7;
        assert!(matches!(
            read_checkpoint(&bad[..]).unwrap_err(),
            NnError::Format(FormatError::UnsupportedVersion { found: 7, .. })
        ));
    }

    #[test]
    fn identity_model_roundtrips() {
        let bytes = encode_checkpoint(&MlpModel::identity());
        assert_eq!(bytes.len(), 10);
        assert!(read_checkpoint(&bytes[..]).unwrap().is_identity());
    }
}
