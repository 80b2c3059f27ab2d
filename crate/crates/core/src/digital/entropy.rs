//! Per-dimension learnable cumulative distribution over latent values.
//!
//! Each latent dimension owns a scalar monotone map `f: ℝ → ℝ` built from `K`
//! stages of width-3 matrices with softplus-positive entries and tanh-gated
//! residuals; the CDF is `c(x) = sigmoid(f(x))`. The probability of the integer
//! `q` is `c(q + ½) − c(q − ½)`, which is also the density of the latent plus
//! uniform quantization noise used during training.

use crate::bytes::{ByteReader, FormatError};
use crate::nn::{Matrix, NnError};

/// Stage widths `1 → 3 → 3 → 3 → 1` (four monotone stages).
const WIDTHS: [usize; 5] = [1, 3, 3, 3, 1];
const STAGES: usize = WIDTHS.len() - 1;
/// Initial CDF is `sigmoid(x / INIT_SCALE)`.
const INIT_SCALE: f64 = 10.0;
/// Probabilities below this are clamped when converted to bits.
pub const MIN_LIKELIHOOD: f64 = 8.881_784_197_001_252e-16; // 2⁻⁵⁰
pub const DEFAULT_SUPPORT: i32 = 255;

// Offsets of each stage's matrix, bias and gate inside one dimension's parameter block.
const fn layout() -> ([usize; STAGES], [usize; STAGES], [usize; STAGES], usize) {
    let mut mat = [0; STAGES];
    let mut bias = [0; STAGES];
    let mut gate = [0; STAGES];
    let mut off = 0;
    let mut k = 0;
    while k < STAGES {
        mat[k] = off;
        off += WIDTHS[k] * WIDTHS[k + 1];
        bias[k] = off;
        off += WIDTHS[k + 1];
        gate[k] = off;
        if k + 1 < STAGES {
            off += WIDTHS[k + 1];
        }
        k += 1;
    }
    (mat, bias, gate, off)
}

const LAYOUT: ([usize; STAGES], [usize; STAGES], [usize; STAGES], usize) = layout();
/// Number of parameters per latent dimension.
pub const PARAMS_PER_DIM: usize = LAYOUT.3;

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// σ'(x) = σ(x)·σ(−x)
#[inline]
fn sigmoid_grad(x: f64) -> f64 {
    sigmoid(x) * sigmoid(-x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyModel {
    dims: usize,
    support: i32,
    params: Vec<f64>,
}

/// Intermediate values of one evaluation of `f`, kept for backprop.
struct Tape {
    // per stage: input h and pre-gate z (max width 3)
    h: [[f64; 3]; STAGES],
    z: [[f64; 3]; STAGES],
}

impl EntropyModel {
    /// Symmetric initialization: zero biases and gates, equal positive matrix entries,
    /// so every `f` is odd and `P(q) = P(−q)`.
    pub fn new(dims: usize, support: i32) -> Result<Self, NnError> {
        if dims == 0 || support < 1 {
            return Err(NnError::InvalidConfig(format!(
                "entropy model needs dims >= 1 and support >= 1, got {dims} / {support}"
            )));
        }
        let scale = INIT_SCALE.powf(1.0 / STAGES as f64);
        let mut block = vec![0.0; PARAMS_PER_DIM];
        let (mat, _, _, _) = LAYOUT;
        for k in 0..STAGES {
            let init = (1.0 / scale / WIDTHS[k + 1] as f64).exp_m1().ln();
            for v in &mut block[mat[k]..mat[k] + WIDTHS[k] * WIDTHS[k + 1]] {
                *v = init;
            }
        }
        let params = block.iter().copied().cycle().take(dims * PARAMS_PER_DIM).collect();
        Ok(Self { dims, support, params })
    }

    pub fn from_params(dims: usize, support: i32, params: Vec<f64>) -> Result<Self, NnError> {
        if params.len() != dims * PARAMS_PER_DIM {
            return Err(NnError::DimensionMismatch {
                context: "entropy model parameters".into(),
                expected: dims * PARAMS_PER_DIM,
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::NonFinite("entropy model parameters".into()));
        }
        let mut m = Self::new(dims, support)?;
        m.params = params;
        Ok(m)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Largest representable symbol magnitude `L`; the alphabet is `[−L, L]`.
    pub fn support(&self) -> i32 {
        self.support
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn block(&self, dim: usize) -> &[f64] {
        &self.params[dim * PARAMS_PER_DIM..(dim + 1) * PARAMS_PER_DIM]
    }

    fn prepare(&self, dim: usize) -> Prepared {
        let p = self.block(dim);
        let (mat, _, gate, _) = LAYOUT;
        let mut eff = [0.0; PARAMS_PER_DIM];
        let mut deriv = [0.0; PARAMS_PER_DIM];
        eff.copy_from_slice(p);
        for k in 0..STAGES {
            for i in mat[k]..mat[k] + WIDTHS[k] * WIDTHS[k + 1] {
                eff[i] = softplus(p[i]);
                deriv[i] = sigmoid(p[i]);
            }
            if k + 1 < STAGES {
                for i in gate[k]..gate[k] + WIDTHS[k + 1] {
                    eff[i] = p[i].tanh();
                    deriv[i] = 1.0 - eff[i] * eff[i];
                }
            }
        }
        Prepared { eff, deriv }
    }
}

/// One dimension's parameters after the positivity/gating transforms, plus their
/// derivatives with respect to the raw parameters.
struct Prepared {
    eff: [f64; PARAMS_PER_DIM],
    deriv: [f64; PARAMS_PER_DIM],
}

impl Prepared {
    fn eval(&self, x: f64) -> (f64, Tape) {
        let p = &self.eff;
        let (mat, bias, gate, _) = LAYOUT;
        let mut tape = Tape { h: [[0.0; 3]; STAGES], z: [[0.0; 3]; STAGES] };
        let mut h = [x, 0.0, 0.0];
        for k in 0..STAGES {
            let (win, wout) = (WIDTHS[k], WIDTHS[k + 1]);
            tape.h[k] = h;
            let mut z = [0.0; 3];
            for (o, zo) in z.iter_mut().enumerate().take(wout) {
                let mut acc = p[bias[k] + o];
                for (i, hi) in h.iter().enumerate().take(win) {
                    acc += p[mat[k] + o * win + i] * hi;
                }
                *zo = acc;
            }
            tape.z[k] = z;
            if k + 1 < STAGES {
                for o in 0..wout {
                    h[o] = z[o] + p[gate[k] + o] * z[o].tanh();
                }
            } else {
                h = z;
            }
        }
        (h[0], tape)
    }

    /// Accumulates `df · ∂f/∂θ` into `grad` (this dimension's block) and returns `df · ∂f/∂x`.
    fn backprop(&self, tape: &Tape, df: f64, grad: &mut [f64]) -> f64 {
        let (p, dp) = (&self.eff, &self.deriv);
        let (mat, bias, gate, _) = LAYOUT;
        let mut g_h = [df, 0.0, 0.0];
        for k in (0..STAGES).rev() {
            let (win, wout) = (WIDTHS[k], WIDTHS[k + 1]);
            let z = tape.z[k];
            let mut g_z = [0.0; 3];
            if k + 1 < STAGES {
                for o in 0..wout {
                    let ta = p[gate[k] + o];
                    let tz = z[o].tanh();
                    g_z[o] = g_h[o] * (1.0 + ta * (1.0 - tz * tz));
                    grad[gate[k] + o] += g_h[o] * dp[gate[k] + o] * tz;
                }
            } else {
                g_z[..wout].copy_from_slice(&g_h[..wout]);
            }
            let h = tape.h[k];
            let mut g_in = [0.0; 3];
            for o in 0..wout {
                grad[bias[k] + o] += g_z[o];
                for i in 0..win {
                    let j = mat[k] + o * win + i;
                    grad[j] += g_z[o] * h[i] * dp[j];
                    g_in[i] += g_z[o] * p[j];
                }
            }
            g_h = g_in;
        }
        g_h[0]
    }
}

impl EntropyModel {
    /// Logit of the CDF, `f(x)`.
    pub fn logit(&self, dim: usize, x: f64) -> f64 {
        self.prepare(dim).eval(x).0
    }

    /// The cumulative function `c(x) = sigmoid(f(x))`.
    pub fn cdf(&self, dim: usize, x: f64) -> f64 {
        sigmoid(self.logit(dim, x))
    }

    /// `c(v + ½) − c(v − ½)`, evaluated on the less saturated side of the sigmoid.
    pub fn likelihood(&self, dim: usize, v: f64) -> f64 {
        interval_mass(self.logit(dim, v - 0.5), self.logit(dim, v + 0.5))
    }

    /// `P(q) = c(q + ½) − c(q − ½)` for an integer symbol within the support.
    pub fn symbol_probability(&self, dim: usize, q: i32) -> Result<f64, SupportError> {
        if q.abs() > self.support {
            return Err(SupportError { symbol: q, support: self.support });
        }
        Ok(self.likelihood(dim, q as f64))
    }

    /// Probabilities of `−L..=L` for one dimension with the tails beyond `±(L + ½)`
    /// folded into the extreme symbols, so the table sums to one.
    pub fn folded_pmf(&self, dim: usize) -> Vec<f64> {
        let l = self.support;
        let prep = self.prepare(dim);
        let logits: Vec<f64> = (-l..l).map(|q| prep.eval(q as f64 + 0.5).0).collect();
        let n = (2 * l + 1) as usize;
        let mut pmf = Vec::with_capacity(n);
        pmf.push(sigmoid(logits[0]));
        for w in logits.windows(2) {
            pmf.push(interval_mass(w[0], w[1]));
        }
        pmf.push(sigmoid(-logits[logits.len() - 1]));
        pmf
    }

    /// Rate term of the training objective: mean over rows of `Σ_dim −log₂ P̃(v)`.
    ///
    /// Returns the bits, the gradient with respect to `latents`, and the gradient with
    /// respect to the model parameters.
    pub fn rate_bits(&self, latents: &Matrix) -> Result<RateLoss, NnError> {
        if latents.cols() != self.dims {
            return Err(NnError::DimensionMismatch {
                context: "rate loss latent width".into(),
                expected: self.dims,
                actual: latents.cols(),
            });
        }
        if !latents.is_finite() {
            return Err(NnError::NonFinite("latents".into()));
        }
        let n = latents.rows().max(1) as f64;
        let mut bits = 0.0;
        let mut clamped = 0usize;
        let mut latent_grad = Matrix::zeros(latents.rows(), latents.cols());
        let mut param_grad = vec![0.0; self.params.len()];
        let prepared: Vec<Prepared> = (0..self.dims).map(|d| self.prepare(d)).collect();
        for r in 0..latents.rows() {
            for (dim, prep) in prepared.iter().enumerate() {
                let v = latents[(r, dim)];
                let (lo, tape_lo) = prep.eval(v - 0.5);
                let (up, tape_up) = prep.eval(v + 0.5);
                let p = interval_mass(lo, up);
                if p < MIN_LIKELIHOOD {
                    bits -= MIN_LIKELIHOOD.log2();
                    clamped += 1;
                    continue;
                }
                bits -= p.log2();
                // d(−log₂ p)/dp = −1/(p ln 2), scaled by 1/n for the batch mean
                let dp = -1.0 / (p * std::f64::consts::LN_2 * n);
                let block = &mut param_grad[dim * PARAMS_PER_DIM..(dim + 1) * PARAMS_PER_DIM];
                let gx_up = prep.backprop(&tape_up, dp * sigmoid_grad(up), block);
                let gx_lo = prep.backprop(&tape_lo, -dp * sigmoid_grad(lo), block);
                latent_grad[(r, dim)] = gx_up + gx_lo;
            }
        }
        if clamped > 0 {
            log::warn!("rate loss: {clamped} likelihoods clamped at 2^-50");
        }
        Ok(RateLoss { bits: bits / n, latent_grad, param_grad })
    }
}

pub const MAGIC: &[u8; 4] = b"FLEM";
pub const VERSION: u16 = 1;

/// `FLEM` layout: magic, u16 version, u32 dims, u32 support `L`, u32 parameters per
/// dimension, then the raw parameters as f64 LE, dimension-major.
pub fn encode_entropy_model(model: &EntropyModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(18 + model.params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.dims as u32).to_le_bytes());
    out.extend_from_slice(&(model.support as u32).to_le_bytes());
    out.extend_from_slice(&(PARAMS_PER_DIM as u32).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_entropy_model(bytes: &[u8]) -> Result<EntropyModel, NnError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { found: version, supported: VERSION }.into());
    }
    let dims = r.u32()? as usize;
    let support_at = r.offset();
    let support = r.u32()?;
    if support == 0 || support > i32::MAX as u32 {
        return Err(FormatError::InvalidField { offset: support_at, what: format!("support {support}") }.into());
    }
    let per_at = r.offset();
    let per = r.u32()? as usize;
    if per != PARAMS_PER_DIM {
        return Err(
            FormatError::InvalidField { offset: per_at, what: format!("parameters per dimension {per}") }.into()
        );
    }
    let params = r.f64_vec(dims * per)?;
    if r.remaining() > 0 {
        return Err(FormatError::TrailingBytes { offset: r.offset(), extra: r.remaining() }.into());
    }
    EntropyModel::from_params(dims, support as i32, params)
}

/// `sigmoid(up) − sigmoid(lo)` for `up ≥ lo`, computed where the sigmoid is not saturated.
#[inline]
fn interval_mass(lo: f64, up: f64) -> f64 {
    if lo + up > 0.0 {
        sigmoid(-lo) - sigmoid(-up)
    } else {
        sigmoid(up) - sigmoid(lo)
    }
}

#[derive(Debug, Clone)]
pub struct RateLoss {
    pub bits: f64,
    pub latent_grad: Matrix,
    pub param_grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("symbol {symbol} outside the coder support [-{support}, {support}]")]
pub struct SupportError {
    pub symbol: i32,
    pub support: i32,
}
