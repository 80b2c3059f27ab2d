//! Compress-then-transmit baseline: a linear feature encoder, scalar quantization,
//! a learned entropy model, arithmetic coding, and delivery over an ideal
//! capacity-achieving channel code.
//!
//! Training replaces rounding with additive `U(−½, ½)` noise and minimizes
//! `rate_bits + λ·cross_entropy`. At test time each query's latent is rounded,
//! coded, and delivered only if its length fits `B · C(snr)`; otherwise the
//! receiver returns a uniformly random gallery item.

mod coder;
mod container;
mod entropy;
mod store;

pub use coder::{arithmetic_decode, arithmetic_encode, Bitstream, CodecError, CodingTable, CodingTables, FREQ_TOTAL};
pub use container::{Container, HEADER_LEN as CONTAINER_HEADER_LEN, MAGIC as CONTAINER_MAGIC};
pub use entropy::{
    decode_entropy_model, encode_entropy_model, EntropyModel, RateLoss, SupportError, DEFAULT_SUPPORT, MIN_LIKELIHOOD,
    PARAMS_PER_DIM,
};
pub use store::{load_digital, save_digital, StoreError};

use rand::Rng;

use crate::channel::{capacity_bits_per_use, ChannelError, SnrDb};
use crate::data::LabeledSet;
use crate::eval::EvalOptions;
use crate::nn::{
    backward, cross_entropy, forward, Activation, DenseLayer, FlatSgd, Matrix, MlpModel, NnError, Sgd, SgdConfig,
};
use crate::retrieval::{Gallery, Metric, RetrievalError};
use crate::seed;
use crate::train::{add_assign, check_loss, shuffled_batches, Stage, TrainingLog};

#[derive(Debug, thiserror::Error)]
pub enum DigitalError {
    #[error("invalid digital config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Adds i.i.d. `U(−½, ½)` noise to every entry (the differentiable stand-in for rounding).
pub fn quantize_train<R: Rng + ?Sized>(latents: &Matrix, rng: &mut R) -> Matrix {
    latents.map(|v| v + rng.random_range(-0.5..0.5))
}

/// Rounds half away from zero.
pub fn quantize_test(latent: &[f64]) -> Vec<i32> {
    latent.iter().map(|v| v.round() as i32).collect()
}

/// How the per-query bit count `R` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RateMode {
    /// Each query is coded as its own stream.
    #[default]
    PerQuery,
    /// All queries are coded as one stream and share its length equally.
    Amortized,
}

impl RateMode {
    pub fn name(self) -> &'static str {
        match self {
            RateMode::PerQuery => "per_query",
            RateMode::Amortized => "amortized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per_query" => Some(RateMode::PerQuery),
            "amortized" => Some(RateMode::Amortized),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalConfig {
    pub latent_dim: usize,
    pub lambda: f64,
    pub epochs: usize,
    /// Optimizer for the feature encoder (its decay is the encoder's L2 weight).
    pub sgd: SgdConfig,
    pub head_decay: f64,
    pub entropy_decay: f64,
    /// Entropy-model learning rate as a multiple of the scheduled rate.
    pub entropy_lr_scale: f64,
    pub batch_size: usize,
    pub support: i32,
    pub seed: u64,
}

impl DigitalConfig {
    pub fn new(latent_dim: usize, lambda: f64) -> Self {
        Self {
            latent_dim,
            lambda,
            epochs: 60,
            sgd: SgdConfig::new(0.01, 0.9, 5e-3).with_drop(30, 0.001),
            head_decay: 0.0,
            entropy_decay: 0.0,
            entropy_lr_scale: 1.0,
            batch_size: 16,
            support: DEFAULT_SUPPORT,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), DigitalError> {
        let mut errs = Vec::new();
        if self.latent_dim == 0 || self.latent_dim > u16::MAX as usize {
            errs.push(format!("latent_dim must be in [1, 65535], got {}", self.latent_dim));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            errs.push(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.epochs == 0 {
            errs.push("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        if self.support < 1 {
            errs.push(format!("support must be positive, got {}", self.support));
        }
        for (name, v) in [("head_decay", self.head_decay), ("entropy_decay", self.entropy_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(self.entropy_lr_scale > 0.0 && self.entropy_lr_scale.is_finite()) {
            errs.push(format!("entropy_lr_scale must be positive, got {}", self.entropy_lr_scale));
        }
        if let Err(e) = self.sgd.validate() {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(DigitalError::InvalidConfig(errs.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalModel {
    pub encoder: MlpModel,
    pub head: MlpModel,
    pub entropy: EntropyModel,
    pub lambda: f64,
}

impl DigitalModel {
    pub fn latent_dim(&self) -> usize {
        self.entropy.dims()
    }

    /// Real-valued encoder outputs `[n × m]`.
    pub fn latents(&self, features: &Matrix) -> Result<Matrix, NnError> {
        self.encoder.predict(features)
    }

    /// Rounded latents clamped to the coder support, one row per input, flattened.
    pub fn symbols(&self, features: &Matrix) -> Result<Vec<i32>, NnError> {
        let l = self.entropy.support();
        let lat = self.latents(features)?;
        Ok(quantize_test(lat.as_slice()).into_iter().map(|s| s.clamp(-l, l)).collect())
    }

    pub fn tables(&self) -> CodingTables {
        CodingTables::from_model(&self.entropy)
    }

    /// Mean relaxed rate `Σ_dim −log₂ P̃(y + u)` per row, with `u` drawn from `seed`.
    pub fn estimated_bits(&self, features: &Matrix, seed: u64) -> Result<f64, NnError> {
        let lat = self.latents(features)?;
        let noisy = quantize_train(&lat, &mut seed::rng(seed, &[seed::tag("rate estimate")]));
        Ok(self.entropy.rate_bits(&noisy)?.bits)
    }
}

#[derive(Debug, Clone)]
pub struct DigitalTraining {
    pub model: DigitalModel,
    pub log: TrainingLog,
    /// Mean relaxed rate (bits per sample) over the last epoch's batches.
    pub final_rate_bits: f64,
}

/// Trains encoder, classifier head and entropy model jointly on
/// `rate_bits + λ·cross_entropy`.
pub fn train_digital(train: &LabeledSet, config: &DigitalConfig) -> Result<DigitalTraining, DigitalError> {
    config.validate()?;
    let d = train.features.cols();
    let m = config.latent_dim;
    let n = train.features.rows();
    if n == 0 {
        return Err(DigitalError::InvalidConfig("empty training set".into()));
    }
    let mut init = seed::rng(config.seed, &[seed::tag("digital init")]);
    let mut encoder = MlpModel::from_layers(vec![DenseLayer::he_uniform(d, m, Activation::Identity, &mut init)])?;
    let mut head =
        MlpModel::from_layers(vec![DenseLayer::he_uniform(m, train.num_classes, Activation::Identity, &mut init)])?;
    let mut entropy = EntropyModel::new(m, config.support)?;

    let head_sgd = config.sgd.clone().with_decay(config.head_decay);
    let mut enc_opt = Sgd::new(&encoder);
    let mut head_opt = Sgd::new(&head);
    let mut em_opt = FlatSgd::new(entropy.params().len());
    let mut shuffle = seed::rng(config.seed, &[seed::tag("digital shuffle")]);
    let mut noise = seed::rng(config.seed, &[seed::tag("digital noise")]);
    let lambda = config.lambda;
    let mut log = TrainingLog::default();
    let mut final_rate_bits = 0.0;

    for epoch in 0..config.epochs {
        let lr = config.sgd.lr_at(epoch);
        let (mut loss_sum, mut rate_sum, mut rows) = (0.0, 0.0, 0usize);
        for batch in shuffled_batches(n, config.batch_size, &mut shuffle) {
            let x = train.features.select_rows(&batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let (y, enc_cache) = forward(&encoder, &x)?;
            let noisy = quantize_train(&y, &mut noise);
            let rate = entropy.rate_bits(&noisy)?;
            let (logits, head_cache) = forward(&head, &noisy)?;
            let (ce, g_logits) = cross_entropy(&logits, &labels)?;
            let head_back = backward(&head, &head_cache, &g_logits.map(|g| g * lambda))?;
            // uniform noise is additive, so ∂ỹ/∂y = I
            let mut g_y = rate.latent_grad;
            add_assign(&mut g_y, &head_back.input_grad);
            let enc_back = backward(&encoder, &enc_cache, &g_y)?;

            enc_opt.step(&mut encoder, &enc_back.grads, &config.sgd, lr)?;
            head_opt.step(&mut head, &head_back.grads, &head_sgd, lr)?;
            em_opt.step(
                entropy.params_mut(),
                &rate.param_grad,
                config.sgd.momentum,
                config.entropy_decay,
                lr * config.entropy_lr_scale,
            );

            let b = batch.len();
            loss_sum += (rate.bits + lambda * ce) * b as f64;
            rate_sum += rate.bits * b as f64;
            rows += b;
        }
        let loss = loss_sum / rows as f64;
        check_loss(loss, Stage::RateAccuracy, epoch)?;
        log.push(Stage::RateAccuracy, epoch, lr, loss);
        final_rate_bits = rate_sum / rows as f64;
    }
    if !(encoder.is_finite() && head.is_finite() && entropy.params().iter().all(|p| p.is_finite())) {
        return Err(NnError::NonFinite("digital model parameters".into()).into());
    }
    Ok(DigitalTraining { model: DigitalModel { encoder, head, entropy, lambda }, log, final_rate_bits })
}

/// Per-query coded lengths and noiseless retrieval outcomes, from which accuracy at
/// any (SNR, bandwidth) follows without re-coding.
#[derive(Debug, Clone)]
pub struct DigitalQueryReport {
    bits: Vec<f64>,
    exact_hit: Vec<bool>,
    query_ids: Vec<u32>,
    gallery_ids: Vec<u32>,
}

impl DigitalQueryReport {
    /// Codes every query, checks that decoding reproduces the symbols, and retrieves
    /// with the decoded latent against the gallery's own quantized latents.
    pub fn new(
        model: &DigitalModel,
        queries: &Matrix,
        query_ids: &[u32],
        gallery: &Gallery,
        metric: Metric,
        rate: RateMode,
    ) -> Result<Self, DigitalError> {
        if queries.rows() != query_ids.len() {
            return Err(RetrievalError::IdCountMismatch { rows: queries.rows(), ids: query_ids.len() }.into());
        }
        let m = model.latent_dim();
        let tables = model.tables();
        let to_f64 = |s: &[i32]| s.iter().map(|&v| v as f64).collect::<Vec<_>>();
        let g_sym = model.symbols(gallery.features())?;
        let coded_gallery = Gallery::new(Matrix::from_vec(gallery.len(), m, to_f64(&g_sym)), gallery.ids().to_vec())?;
        let q_sym = model.symbols(queries)?;
        let mut bits = Vec::with_capacity(queries.rows());
        let mut exact_hit = Vec::with_capacity(queries.rows());
        for (row, &id) in q_sym.chunks(m).zip(query_ids) {
            let stream = arithmetic_encode(row, &tables)?;
            let decoded = arithmetic_decode(&stream, &tables, m)?;
            if decoded != row {
                return Err(CodecError::Corrupt { index: 0 }.into());
            }
            bits.push(stream.bit_len() as f64);
            let nn = coded_gallery.nearest(&to_f64(&decoded), metric)?;
            exact_hit.push(coded_gallery.ids()[nn] == id);
        }
        if rate == RateMode::Amortized && !q_sym.is_empty() {
            let total = arithmetic_encode(&q_sym, &tables)?.bit_len() as f64;
            let share = total / queries.rows() as f64;
            bits.iter_mut().for_each(|b| *b = share);
        }
        Ok(Self { bits, exact_hit, query_ids: query_ids.to_vec(), gallery_ids: gallery.ids().to_vec() })
    }

    pub fn bits(&self) -> &[f64] {
        &self.bits
    }

    pub fn mean_bits(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.bits.iter().sum::<f64>() / self.bits.len() as f64
        }
    }

    /// Top-1 accuracy when every query is delivered.
    pub fn noiseless_accuracy(&self) -> f64 {
        if self.exact_hit.is_empty() {
            return 0.0;
        }
        self.exact_hit.iter().filter(|&&h| h).count() as f64 / self.exact_hit.len() as f64
    }

    /// Fraction of queries whose bits fit `B · C(snr)`.
    pub fn delivered_fraction(&self, snr: SnrDb, bandwidth: usize) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        let budget = budget_bits(snr, bandwidth);
        self.bits.iter().filter(|&&b| b <= budget).count() as f64 / self.bits.len() as f64
    }

    /// Mean top-1 over queries × trials. Undelivered queries retrieve a uniformly
    /// random gallery item drawn from a stream keyed by `(seed, query, trial)`.
    pub fn accuracy(&self, snr: SnrDb, bandwidth: usize, opts: &EvalOptions) -> f64 {
        let trials = opts.trials.max(1);
        if self.bits.is_empty() {
            return 0.0;
        }
        let budget = budget_bits(snr, bandwidth);
        let mut hits = 0usize;
        for (q, (&bits, &id)) in self.bits.iter().zip(&self.query_ids).enumerate() {
            if bits <= budget {
                hits += trials * self.exact_hit[q] as usize;
                continue;
            }
            for t in 0..trials {
                let mut rng = seed::rng(opts.seed, &[seed::tag("fallback"), q as u64, t as u64]);
                let pick = rng.random_range(0..self.gallery_ids.len());
                hits += (self.gallery_ids[pick] == id) as usize;
            }
        }
        hits as f64 / (self.bits.len() * trials) as f64
    }
}

fn budget_bits(snr: SnrDb, bandwidth: usize) -> f64 {
    if snr.is_noiseless() {
        f64::INFINITY
    } else {
        // SnrDb::linear is nonnegative, so capacity cannot fail
        capacity_bits_per_use(snr.linear()).unwrap_or(0.0) * bandwidth as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalEvaluation {
    pub accuracy: f64,
    pub mean_bits: f64,
    pub delivered_fraction: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_digital(
    model: &DigitalModel,
    queries: &Matrix,
    query_ids: &[u32],
    gallery: &Gallery,
    bandwidth: usize,
    test_snr: SnrDb,
    rate: RateMode,
    opts: &EvalOptions,
) -> Result<DigitalEvaluation, DigitalError> {
    if bandwidth == 0 {
        return Err(ChannelError::ZeroBandwidth.into());
    }
    let report = DigitalQueryReport::new(model, queries, query_ids, gallery, opts.metric, rate)?;
    Ok(DigitalEvaluation {
        accuracy: report.accuracy(test_snr, bandwidth, opts),
        mean_bits: report.mean_bits(),
        delivered_fraction: report.delivered_fraction(test_snr, bandwidth),
    })
}
