//! 32-bit binary arithmetic coder over 16-bit frequency tables.
//!
//! Interval renormalization follows the classic carry-less scheme with
//! pending (underflow) bits. The encoder terminates with the shortest bit
//! string whose zero-extension lies in the final interval; the decoder reads
//! zeros past the end of the payload, so trailing zero bits are dropped.

use super::entropy::EntropyModel;

pub const FREQ_BITS: u32 = 16;
pub const FREQ_TOTAL: u32 = 1 << FREQ_BITS;

const PRECISION: u32 = 32;
const TOP: u64 = (1 << PRECISION) - 1;
const HALF: u64 = 1 << (PRECISION - 1);
const QUARTER: u64 = 1 << (PRECISION - 2);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("symbol {symbol} outside the coder support [-{support}, {support}]")]
    OutOfSupport { symbol: i32, support: i32 },
    #[error("no coding tables")]
    NoTables,
    #[error("corrupt payload at symbol {index}")]
    Corrupt { index: usize },
    #[error("table for {dims} dims cannot decode a stream with latent dim {found}")]
    DimMismatch { dims: usize, found: usize },
}

/// Cumulative frequencies for one latent dimension, symbols `−L..=L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingTable {
    support: i32,
    cum: Vec<u32>,
}

impl CodingTable {
    /// Quantizes a pmf to integer frequencies summing to `2¹⁶`: every symbol gets
    /// `1 + ⌊p·(T − n)⌋` and the remainder goes to the most probable symbol.
    pub fn from_pmf(pmf: &[f64]) -> Self {
        let n = pmf.len();
        assert!(n % 2 == 1 && n as u32 <= FREQ_TOTAL, "pmf length {n}");
        let spare = (FREQ_TOTAL - n as u32) as f64;
        let mut freq: Vec<u32> = pmf.iter().map(|&p| 1 + (p.clamp(0.0, 1.0) * spare).floor() as u32).collect();
        let sum: u32 = freq.iter().sum();
        let top = pmf.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &p)| if p > b.1 { (i, p) } else { b }).0;
        // floor keeps the sum at or below the total
        freq[top] += FREQ_TOTAL - sum;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0);
        let mut acc = 0;
        for f in freq {
            acc += f;
            cum.push(acc);
        }
        Self { support: (n / 2) as i32, cum }
    }

    pub fn support(&self) -> i32 {
        self.support
    }

    fn index(&self, symbol: i32) -> Result<usize, CodecError> {
        if symbol.abs() > self.support {
            return Err(CodecError::OutOfSupport { symbol, support: self.support });
        }
        Ok((symbol + self.support) as usize)
    }

    /// Integer frequency of `symbol` out of `2¹⁶`.
    pub fn frequency(&self, symbol: i32) -> Result<u32, CodecError> {
        let i = self.index(symbol)?;
        Ok(self.cum[i + 1] - self.cum[i])
    }

    /// Probability the coder actually uses for `symbol`; at least `2⁻¹⁶`.
    pub fn probability(&self, symbol: i32) -> Result<f64, CodecError> {
        Ok(self.frequency(symbol)? as f64 / FREQ_TOTAL as f64)
    }

    fn lookup(&self, count: u32) -> usize {
        // last i with cum[i] <= count
        self.cum.partition_point(|&c| c <= count) - 1
    }
}

/// One table per latent dimension; symbol `i` of a stream uses table `i mod dims`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingTables {
    tables: Vec<CodingTable>,
}

impl CodingTables {
    pub fn from_model(model: &EntropyModel) -> Self {
        Self { tables: (0..model.dims()).map(|d| CodingTable::from_pmf(&model.folded_pmf(d))).collect() }
    }

    pub fn new(tables: Vec<CodingTable>) -> Result<Self, CodecError> {
        if tables.is_empty() {
            return Err(CodecError::NoTables);
        }
        Ok(Self { tables })
    }

    pub fn dims(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, dim: usize) -> &CodingTable {
        &self.tables[dim]
    }

    /// `Σ −log₂ p̂(sᵢ)` under the quantized tables.
    pub fn ideal_bits(&self, symbols: &[i32]) -> Result<f64, CodecError> {
        symbols.iter().enumerate().map(|(i, &s)| Ok(-self.tables[i % self.dims()].probability(s)?.log2())).sum()
    }
}

/// Bits packed MSB-first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bitstream {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl Bitstream {
    pub fn from_parts(mut bytes: Vec<u8>, bit_len: usize) -> Option<Self> {
        if bytes.len() != bit_len.div_ceil(8) {
            return None;
        }
        // bits past the end are defined as zero
        if !bit_len.is_multiple_of(8) {
            let last = bytes.len() - 1;
            bytes[last] &= 0xffu8 << (8 - bit_len % 8);
        }
        Some(Self { bytes, bit_len })
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn push(&mut self, bit: bool) {
        if self.bit_len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    fn get(&self, i: usize) -> bool {
        i < self.bit_len && self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    fn trim_trailing_zeros(&mut self) {
        while self.bit_len > 0 && !self.get(self.bit_len - 1) {
            self.bit_len -= 1;
        }
        self.bytes.truncate(self.bit_len.div_ceil(8));
    }
}

struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    out: Bitstream,
}

impl Encoder {
    fn new() -> Self {
        Self { low: 0, high: TOP, pending: 0, out: Bitstream::default() }
    }

    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        for _ in 0..self.pending {
            self.out.push(!bit);
        }
        self.pending = 0;
    }

    fn encode(&mut self, lo: u32, hi: u32) {
        let range = self.high - self.low + 1;
        self.high = self.low + range * hi as u64 / FREQ_TOTAL as u64 - 1;
        self.low += range * lo as u64 / FREQ_TOTAL as u64;
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < 3 * QUARTER {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
    }

    fn finish(mut self) -> Bitstream {
        // shortest k-bit prefix v with v·2^(32−k) in [low, high]
        let mut k = 0;
        let value = loop {
            let unit = 1u64 << (PRECISION - k);
            let v = self.low.div_ceil(unit) * unit;
            if v <= self.high {
                break v;
            }
            k += 1;
        };
        // pending bits are only resolved by an emitted bit
        let k = if self.pending > 0 { k.max(1) } else { k };
        for i in 0..k {
            self.emit(value >> (PRECISION - 1 - i) & 1 == 1);
        }
        self.out.trim_trailing_zeros();
        self.out
    }
}

/// Encodes a flattened `[n × dims]` symbol array.
pub fn arithmetic_encode(symbols: &[i32], tables: &CodingTables) -> Result<Bitstream, CodecError> {
    let mut enc = Encoder::new();
    for (i, &s) in symbols.iter().enumerate() {
        let t = &tables.tables[i % tables.dims()];
        let j = t.index(s)?;
        enc.encode(t.cum[j], t.cum[j + 1]);
    }
    Ok(enc.finish())
}

/// Decodes `count` symbols. A damaged payload either decodes to other symbols or
/// reports [`CodecError::Corrupt`]; it never panics.
pub fn arithmetic_decode(stream: &Bitstream, tables: &CodingTables, count: usize) -> Result<Vec<i32>, CodecError> {
    let mut pos = 0;
    let mut next = || {
        let b = stream.get(pos);
        pos += 1;
        b as u64
    };
    let mut value = 0u64;
    for _ in 0..PRECISION {
        value = (value << 1) | next();
    }
    let (mut low, mut high) = (0u64, TOP);
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        if value < low || value > high {
            return Err(CodecError::Corrupt { index });
        }
        let t = &tables.tables[index % tables.dims()];
        let range = high - low + 1;
        let count_in = ((value - low + 1) * FREQ_TOTAL as u64 - 1) / range;
        let j = t.lookup(count_in as u32);
        out.push(j as i32 - t.support);
        high = low + range * t.cum[j + 1] as u64 / FREQ_TOTAL as u64 - 1;
        low += range * t.cum[j] as u64 / FREQ_TOTAL as u64;
        loop {
            if high < HALF {
            } else if low >= HALF {
                value -= HALF;
                low -= HALF;
                high -= HALF;
            } else if low >= QUARTER && high < 3 * QUARTER {
                value -= QUARTER;
                low -= QUARTER;
                high -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
            value = (value << 1) | next();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(l: i32) -> CodingTables {
        let n = (2 * l + 1) as usize;
        CodingTables::new(vec![CodingTable::from_pmf(&vec![1.0 / n as f64; n])]).unwrap()
    }

    #[test]
    fn frequencies_sum_to_total_with_floor_one() {
        let mut pmf = vec![0.0; 511];
        pmf[255] = 1.0;
        let t = CodingTable::from_pmf(&pmf);
        assert_eq!(*t.cum.last().unwrap(), FREQ_TOTAL);
        assert_eq!(t.frequency(-255).unwrap(), 1);
        assert_eq!(t.frequency(0).unwrap(), FREQ_TOTAL - 510);
        assert!(t.frequency(256).is_err());
    }

    #[test]
    fn empty_input_is_empty_stream() {
        let t = uniform(3);
        let s = arithmetic_encode(&[], &t).unwrap();
        assert_eq!(s.bit_len(), 0);
        assert_eq!(arithmetic_decode(&s, &t, 0).unwrap(), Vec::<i32>::new());
    }

    #[test]
    fn round_trip_small() {
        let t = uniform(2);
        let syms = [0, 1, -2, 2, 2, -1, 0, 0, 1];
        let s = arithmetic_encode(&syms, &t).unwrap();
        assert_eq!(arithmetic_decode(&s, &t, syms.len()).unwrap(), syms);
    }

    #[test]
    fn certain_symbols_cost_almost_nothing() {
        let mut pmf = vec![0.0; 3];
        pmf[1] = 1.0;
        let t = CodingTables::new(vec![CodingTable::from_pmf(&pmf)]).unwrap();
        let syms = vec![0; 1000];
        let s = arithmetic_encode(&syms, &t).unwrap();
        // −log₂((2¹⁶ − 2)/2¹⁶) ≈ 4.4e-5 bits per symbol
        assert!(s.bit_len() <= 2, "{}", s.bit_len());
        assert_eq!(arithmetic_decode(&s, &t, 1000).unwrap(), syms);
    }

    #[test]
    fn bitstream_masks_bits_past_end() {
        let b = Bitstream::from_parts(vec![0xff], 3).unwrap();
        assert_eq!(b.bytes(), &[0xe0]);
        assert!(Bitstream::from_parts(vec![0, 0], 3).is_none());
    }
}
