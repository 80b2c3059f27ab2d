//! `FLAC0` bitstream container. Probability tables are not embedded; the decoder
//! needs the same trained model.
//!
//! ```text
//! offset  size  field
//! 0       5     magic "FLAC0"
//! 5       2     version (u16 LE) = 1
//! 7       4     symbol count (u32 LE)
//! 11      2     latent dim (u16 LE)
//! 13      4     payload length in bits (u32 LE)
//! 17      ⌈bits/8⌉  payload, MSB-first
//! ```

use super::coder::Bitstream;
use crate::bytes::{ByteReader, FormatError};

pub const MAGIC: &[u8; 5] = b"FLAC0";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub symbol_count: u32,
    pub latent_dim: u16,
    pub payload: Bitstream,
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.bytes().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.symbol_count.to_le_bytes());
        out.extend_from_slice(&self.latent_dim.to_le_bytes());
        out.extend_from_slice(&(self.payload.bit_len() as u32).to_le_bytes());
        out.extend_from_slice(self.payload.bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(MAGIC)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion { found: version, supported: VERSION });
        }
        let symbol_count = r.u32()?;
        let dim_at = r.offset();
        let latent_dim = r.u16()?;
        if latent_dim == 0 {
            return Err(FormatError::InvalidField { offset: dim_at, what: "latent dim 0".into() });
        }
        let bits = r.u32()? as usize;
        let payload_at = r.offset();
        let data = r.take(bits.div_ceil(8))?.to_vec();
        if r.remaining() > 0 {
            return Err(FormatError::TrailingBytes { offset: r.offset(), extra: r.remaining() });
        }
        let payload = Bitstream::from_parts(data, bits)
            .ok_or(FormatError::InvalidField { offset: payload_at, what: "payload".into() })?;
        Ok(Self { symbol_count, latent_dim, payload })
    }
}
