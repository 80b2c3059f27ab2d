//! Real-valued AWGN channel `y = x + z`, per-vector power normalization, and the
//! SNR / capacity arithmetic used to bound the digital scheme.
//!
//! The noiseless channel is `SnrDb::INFINITE`, not a large finite value.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{dot, Matrix};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChannelError {
    #[error("cannot power-normalize an all-zero vector")]
    DegenerateInput,
    #[error("cannot normalize an empty vector")]
    Empty,
    #[error("power must be positive and finite, got {0}")]
    InvalidPower(f64),
    #[error("snr must be nonnegative, got {0}")]
    NegativeSnr(f64),
    #[error("linear ratio must be positive to convert to dB, got {0}")]
    NonPositiveRatio(f64),
    #[error("invalid SNR {0:?}")]
    InvalidSnr(String),
    #[error("bandwidth must be at least 1")]
    ZeroBandwidth,
    #[error("rate must be nonnegative and finite, got {0}")]
    InvalidRate(f64),
}

/// SNR in decibels. `+∞` is the noiseless channel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrDb(f64);

impl SnrDb {
    pub const INFINITE: SnrDb = SnrDb(f64::INFINITY);

    pub fn new(db: f64) -> Result<Self, ChannelError> {
        if db.is_nan() || db == f64::NEG_INFINITY {
            return Err(ChannelError::InvalidSnr(db.to_string()));
        }
        Ok(Self(db))
    }

    pub fn db(self) -> f64 {
        self.0
    }

    pub fn is_noiseless(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn linear(self) -> f64 {
        snr_db_to_linear(self.0)
    }

    /// Bit pattern usable as a hash / seed component.
    pub fn key(self) -> u64 {
        self.0.to_bits()
    }
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_noiseless() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for SnrDb {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "∞" => Ok(Self::INFINITE),
            _ => t.parse::<f64>().map_err(|_| ChannelError::InvalidSnr(s.to_string())).and_then(Self::new),
        }
    }
}

pub fn snr_db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(ratio: f64) -> Result<f64, ChannelError> {
    if ratio <= 0.0 || ratio.is_nan() {
        return Err(ChannelError::NonPositiveRatio(ratio));
    }
    Ok(10.0 * ratio.log10())
}

/// Real-AWGN Shannon capacity `½·log₂(1 + snr)` in bits per channel use.
pub fn capacity_bits_per_use(snr_linear: f64) -> Result<f64, ChannelError> {
    if snr_linear.is_nan() || snr_linear < 0.0 {
        return Err(ChannelError::NegativeSnr(snr_linear));
    }
    Ok(0.5 * snr_linear.ln_1p() / std::f64::consts::LN_2)
}

/// Smallest SNR (dB) at which a capacity-achieving code delivers `total_bits` in
/// `bandwidth` channel uses: `snr = 2^(2·bits/B) − 1`. Zero bits gives `−∞`.
pub fn min_snr_for_rate(total_bits: f64, bandwidth: usize) -> Result<f64, ChannelError> {
    if bandwidth == 0 {
        return Err(ChannelError::ZeroBandwidth);
    }
    if !(total_bits >= 0.0 && total_bits.is_finite()) {
        return Err(ChannelError::InvalidRate(total_bits));
    }
    if total_bits == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let exponent = 2.0 * total_bits / bandwidth as f64 * std::f64::consts::LN_2;
    linear_to_db(exponent.exp_m1())
}

/// A block of `B` real channel symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    symbols: Vec<f64>,
}

impl ChannelVector {
    /// Wraps symbols without normalizing (for callers that already enforce power).
    pub fn from_raw(symbols: Vec<f64>) -> Self {
        Self { symbols }
    }

    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn average_power(&self) -> f64 {
        average_power(&self.symbols)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.symbols
    }
}

pub fn average_power(v: &[f64]) -> f64 {
    dot(v, v) / v.len() as f64
}

/// Scales `v` so that `(1/B)·Σv_i² = power`, preserving direction.
pub fn power_normalize(v: &[f64], power: f64) -> Result<ChannelVector, ChannelError> {
    let mut out = v.to_vec();
    normalize_in_place(&mut out, power)?;
    Ok(ChannelVector { symbols: out })
}

/// Normalizes in place and returns the applied scale factor.
fn normalize_in_place(v: &mut [f64], power: f64) -> Result<f64, ChannelError> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(ChannelError::InvalidPower(power));
    }
    if v.is_empty() {
        return Err(ChannelError::Empty);
    }
    let energy = dot(v, v);
    if energy == 0.0 || !energy.is_finite() {
        return Err(ChannelError::DegenerateInput);
    }
    let scale = (power * v.len() as f64 / energy).sqrt();
    for x in v.iter_mut() {
        *x *= scale;
    }
    Ok(scale)
}

/// How gradients flow back through power normalization during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NormGradient {
    /// Treat the per-vector scale as a constant: `∂L/∂x = s·∂L/∂y`.
    #[default]
    ConstantScale,
    /// Full Jacobian `s·(I − ŷŷᵀ)`, projecting out the radial component.
    Exact,
}

/// Row-wise power normalization of a batch. Returns outputs and per-row scales.
pub fn normalize_rows(m: &Matrix, power: f64) -> Result<(Matrix, Vec<f64>), ChannelError> {
    let mut out = m.clone();
    let mut scales = Vec::with_capacity(m.rows());
    for r in 0..out.rows() {
        scales.push(normalize_in_place(out.row_mut(r), power)?);
    }
    Ok((out, scales))
}

/// Backward pass matching [`normalize_rows`].
pub fn normalize_rows_backward(grad: &Matrix, normalized: &Matrix, scales: &[f64], mode: NormGradient) -> Matrix {
    let mut out = grad.clone();
    for (r, &s) in scales.iter().enumerate() {
        let g = out.row_mut(r);
        if mode == NormGradient::Exact {
            let y = normalized.row(r);
            let yy = dot(y, y);
            let proj = dot(y, g) / yy;
            for (gv, &yv) in g.iter_mut().zip(y) {
                *gv -= proj * yv;
            }
        }
        for gv in g.iter_mut() {
            *gv *= s;
        }
    }
    out
}

/// Additive white Gaussian noise channel with average input power `power`.
///
/// Noise for call `k` comes from ChaCha stream `k` of `seed`, so results depend only on
/// `(seed, stream)` and never on call interleaving across threads.
#[derive(Debug)]
pub struct AwgnChannel {
    snr: SnrDb,
    power: f64,
    seed: u64,
    calls: AtomicU64,
}

impl Clone for AwgnChannel {
    fn clone(&self) -> Self {
        Self {
            snr: self.snr,
            power: self.power,
            seed: self.seed,
            calls: AtomicU64::new(self.calls.load(Ordering::Relaxed)),
        }
    }
}

impl AwgnChannel {
    pub fn new(snr: SnrDb, power: f64, seed: u64) -> Result<Self, ChannelError> {
        if !(power > 0.0 && power.is_finite()) {
            return Err(ChannelError::InvalidPower(power));
        }
        Ok(Self { snr, power, seed, calls: AtomicU64::new(0) })
    }

    pub fn snr(&self) -> SnrDb {
        self.snr
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// σ² = P / 10^(snr/10); zero for the noiseless channel.
    pub fn noise_variance(&self) -> f64 {
        if self.snr.is_noiseless() {
            0.0
        } else {
            self.power / self.snr.linear()
        }
    }

    /// Sends `x`, drawing fresh noise from the next stream of this channel.
    pub fn transmit(&self, x: &ChannelVector) -> Vec<f64> {
        let stream = self.calls.fetch_add(1, Ordering::Relaxed);
        self.transmit_on_stream(x.symbols(), stream)
    }

    /// Sends `x` using an explicit noise stream (for reproducible parallel evaluation).
    pub fn transmit_on_stream(&self, x: &[f64], stream: u64) -> Vec<f64> {
        let mut y = x.to_vec();
        self.add_noise(&mut y, stream);
        y
    }

    /// Adds `z ~ N(0, σ²)` to every entry of `buf` using the given stream.
    pub fn add_noise(&self, buf: &mut [f64], stream: u64) {
        let var = self.noise_variance();
        if var == 0.0 {
            return;
        }
        let sigma = var.sqrt();
        let mut rng = self.stream_rng(stream);
        for v in buf.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }

    fn stream_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}
