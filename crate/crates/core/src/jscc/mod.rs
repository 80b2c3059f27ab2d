//! Analog joint source-channel coding: features are mapped straight to `B` channel
//! symbols by a learned encoder, power-normalized, sent over AWGN, and mapped back
//! by a decoder before nearest-neighbour retrieval.
//!
//! Two variants:
//! - **AE**: multi-layer encoder `d → … → B` with a mirrored decoder, trained in
//!   three stages (classifier pretraining, channel-aware reconstruction, joint
//!   fine-tuning).
//! - **FC**: a single linear layer `d → B` with an identity decoder, trained end to end.

mod manifest;
mod train;

pub use manifest::{load_jscc, save_jscc, MANIFEST_FILE};
pub use train::{train_jscc, train_jscc_ae, train_jscc_fc, JsccTraining};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::{normalize_rows, power_normalize, AwgnChannel, ChannelError, ChannelVector, NormGradient, SnrDb};
use crate::data::DataError;
use crate::eval::EvalOptions;
use crate::nn::{Activation, Matrix, MlpModel, NnError, SgdConfig};
use crate::retrieval::{Gallery, RetrievalError};
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum JsccError {
    #[error("invalid jscc config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Ae,
    Fc,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ae => "ae",
            Variant::Fc => "fc",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ae" => Ok(Variant::Ae),
            "fc" => Ok(Variant::Fc),
            _ => Err(format!("unknown jscc variant {s:?}")),
        }
    }
}

/// The trainable front end applied to dataset features before the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ExtractorKind {
    /// No extractor; dataset features go straight to the encoder.
    PassThrough,
    /// A `d → d` linear layer initialized to the identity.
    #[default]
    Linear,
}

impl ExtractorKind {
    pub fn name(self) -> &'static str {
        match self {
            ExtractorKind::PassThrough => "pass_through",
            ExtractorKind::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pass_through" => Some(ExtractorKind::PassThrough),
            "linear" => Some(ExtractorKind::Linear),
            _ => None,
        }
    }
}

/// What the receiver's gallery contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GalleryView {
    /// Gallery features passed through the model's noiseless encode/decode chain, so
    /// queries and gallery live in the same space.
    #[default]
    Matched,
    /// Gallery features after the extractor only (AE only; needs decoder output `d`).
    Extracted,
}

impl GalleryView {
    pub fn name(self) -> &'static str {
        match self {
            GalleryView::Matched => "matched",
            GalleryView::Extracted => "extracted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "matched" => Some(GalleryView::Matched),
            "extracted" => Some(GalleryView::Extracted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSchedule {
    pub epochs: usize,
    pub sgd: SgdConfig,
}

impl StageSchedule {
    pub fn new(epochs: usize, sgd: SgdConfig) -> Self {
        Self { epochs, sgd }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsccConfig {
    pub variant: Variant,
    pub feature_dim: usize,
    pub bandwidth: usize,
    /// Encoder hidden widths, input side first; the decoder uses them reversed.
    pub encoder_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub train_snr: SnrDb,
    pub power: f64,
    pub extractor: ExtractorKind,
    pub norm_gradient: NormGradient,
    pub pretrain: StageSchedule,
    pub reconstruct: StageSchedule,
    pub finetune: StageSchedule,
    /// FC only.
    pub end_to_end: StageSchedule,
    pub batch_size: usize,
    pub seed: u64,
}

impl JsccConfig {
    fn base(variant: Variant, feature_dim: usize, bandwidth: usize) -> Self {
        Self {
            variant,
            feature_dim,
            bandwidth,
            encoder_hidden: Vec::new(),
            hidden_activation: Activation::LeakyRelu,
            train_snr: SnrDb::INFINITE,
            power: 1.0,
            extractor: ExtractorKind::default(),
            norm_gradient: NormGradient::default(),
            pretrain: StageSchedule::new(30, SgdConfig::new(0.01, 0.9, 5e-4)),
            reconstruct: StageSchedule::new(200, SgdConfig::new(0.1, 0.9, 5e-4).with_drop(150, 0.01)),
            finetune: StageSchedule::new(40, SgdConfig::new(0.01, 0.9, 5e-4).with_drop(30, 0.001)),
            end_to_end: StageSchedule::new(50, SgdConfig::new(0.01, 0.9, 5e-4).with_drop(30, 0.001)),
            batch_size: 16,
            seed: 0,
        }
    }

    /// AE defaults: one hidden layer of width `max(d/2, B)`.
    pub fn ae(feature_dim: usize, bandwidth: usize) -> Self {
        let mut c = Self::base(Variant::Ae, feature_dim, bandwidth);
        c.encoder_hidden = vec![(feature_dim / 2).max(bandwidth)];
        c
    }

    pub fn fc(feature_dim: usize, bandwidth: usize) -> Self {
        Self::base(Variant::Fc, feature_dim, bandwidth)
    }

    pub fn with_train_snr(mut self, snr: SnrDb) -> Self {
        self.train_snr = snr;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), JsccError> {
        let mut errs = Vec::new();
        if self.feature_dim == 0 {
            errs.push("feature_dim must be positive".to_string());
        }
        if self.bandwidth == 0 || self.bandwidth > self.feature_dim {
            errs.push(format!("bandwidth must be in [1, feature_dim = {}], got {}", self.feature_dim, self.bandwidth));
        }
        match self.variant {
            Variant::Fc if !self.encoder_hidden.is_empty() => errs.push("FC variant takes no hidden layers".into()),
            Variant::Ae if self.encoder_hidden.is_empty() => {
                errs.push("AE variant needs at least one hidden layer".into())
            }
            _ => {}
        }
        if self.encoder_hidden.contains(&0) {
            errs.push("hidden widths must be positive".into());
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            errs.push(format!("power must be positive, got {}", self.power));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        let stages = [
            ("pretrain", &self.pretrain),
            ("reconstruct", &self.reconstruct),
            ("finetune", &self.finetune),
            ("end_to_end", &self.end_to_end),
        ];
        for (name, s) in stages {
            if let Err(e) = s.sgd.validate() {
                errs.push(format!("{name}: {e}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(JsccError::InvalidConfig(errs.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsccModel {
    pub variant: Variant,
    pub train_snr: SnrDb,
    pub power: f64,
    pub extractor: MlpModel,
    pub encoder: MlpModel,
    /// Identity (no layers) for FC.
    pub decoder: MlpModel,
    pub head: MlpModel,
}

impl JsccModel {
    pub fn feature_dim(&self) -> usize {
        self.extractor.in_dim().or(self.encoder.in_dim()).expect("encoder has layers")
    }

    pub fn bandwidth(&self) -> usize {
        self.encoder.out_dim().expect("encoder has layers")
    }

    pub fn extract(&self, features: &Matrix) -> Result<Matrix, NnError> {
        self.extractor.predict(features)
    }

    /// Extractor, encoder, then per-row power normalization: `[n × B]` channel inputs.
    pub fn encode_batch(&self, features: &Matrix) -> Result<Matrix, JsccError> {
        let z = self.encoder.predict(&self.extract(features)?)?;
        Ok(normalize_rows(&z, self.power)?.0)
    }

    pub fn encode(&self, features: &[f64]) -> Result<ChannelVector, JsccError> {
        let z = self.encoder.predict_one(&self.extractor.predict_one(features)?)?;
        Ok(power_normalize(&z, self.power)?)
    }

    pub fn decode_batch(&self, received: &Matrix) -> Result<Matrix, NnError> {
        self.decoder.predict(received)
    }

    pub fn decode(&self, received: &[f64]) -> Result<Vec<f64>, NnError> {
        if received.len() != self.bandwidth() {
            return Err(NnError::DimensionMismatch {
                context: "received vector".into(),
                expected: self.bandwidth(),
                actual: received.len(),
            });
        }
        self.decoder.predict_one(received)
    }

    /// Receiver-side gallery features for `view`.
    pub fn gallery_features(&self, gallery: &Gallery, view: GalleryView) -> Result<Gallery, JsccError> {
        let features = match view {
            GalleryView::Matched => self.decode_batch(&self.encode_batch(gallery.features())?)?,
            GalleryView::Extracted => {
                if self.variant == Variant::Fc {
                    return Err(JsccError::Usage(
                        "extracted gallery view needs a decoder back to feature space (AE only)".into(),
                    ));
                }
                self.extract(gallery.features())?
            }
        };
        Ok(Gallery::new(features, gallery.ids().to_vec())?)
    }
}

/// Mean top-1 over queries × trials: each query is encoded, sent through AWGN at
/// `test_snr`, decoded and matched against the receiver-side gallery.
///
/// Noise for `(query q, trial t)` comes from its own stream, so the result does not
/// depend on thread scheduling.
pub fn evaluate_jscc(
    model: &JsccModel,
    queries: &Matrix,
    query_ids: &[u32],
    gallery: &Gallery,
    test_snr: SnrDb,
    view: GalleryView,
    opts: &EvalOptions,
) -> Result<f64, JsccError> {
    if opts.trials == 0 {
        return Err(JsccError::Usage("trials must be at least 1".into()));
    }
    if queries.rows() != query_ids.len() {
        return Err(RetrievalError::IdCountMismatch { rows: queries.rows(), ids: query_ids.len() }.into());
    }
    if queries.rows() == 0 {
        return Ok(0.0);
    }
    let receiver = model.gallery_features(gallery, view)?;
    let sent = model.encode_batch(queries)?;
    let channel = AwgnChannel::new(test_snr, model.power, seed::derive(opts.seed, &[seed::tag("eval channel")]))?;
    // noiseless trials are identical, so one suffices
    let trials = if test_snr.is_noiseless() { 1 } else { opts.trials };
    let hits = (0..queries.rows())
        .into_par_iter()
        .map(|q| -> Result<usize, JsccError> {
            let mut received = Matrix::zeros(trials, model.bandwidth());
            for t in 0..trials {
                let row = received.row_mut(t);
                row.copy_from_slice(sent.row(q));
                channel.add_noise(row, ((q as u64) << 32) | t as u64);
            }
            let decoded = model.decode_batch(&received)?;
            let mut hits = 0;
            for row in decoded.row_iter() {
                hits += (receiver.ids()[receiver.nearest(row, opts.metric)?] == query_ids[q]) as usize;
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / (queries.rows() * trials) as f64)
}
