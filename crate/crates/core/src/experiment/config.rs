//! Experiment config files.
//!
//! One `key = value` per line; `#` starts a comment. List values are
//! comma-separated. SNR lists accept `inf` for the noiseless channel.
//!
//! ```text
//! scheme      = jscc_ae            # jscc_ae | jscc_fc | digital | noiseless_bound
//! dataset     = synthetic          # synthetic | file
//! bandwidths  = 4, 8, 16, 32
//! train_snrs  = -3, 0, inf
//! test_snrs   = -10, -6, -3, 0, 3, 6, 10, 20
//! trials      = 20
//! seed        = 0
//! ```
//!
//! Every other key is optional; see [`ExperimentConfig::default`] and the
//! `synthetic.*` keys in [`parse_config`].

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::channel::SnrDb;
use crate::data::SyntheticSpec;
use crate::digital::RateMode;
use crate::jscc::{ExtractorKind, GalleryView};
use crate::kv;
use crate::retrieval::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    JsccAe,
    JsccFc,
    Digital,
    /// Raw features, no channel: the accuracy ceiling.
    NoiselessBound,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::JsccAe => "jscc_ae",
            Scheme::JsccFc => "jscc_fc",
            Scheme::Digital => "digital",
            Scheme::NoiselessBound => "noiseless_bound",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jscc_ae" => Some(Scheme::JsccAe),
            "jscc_fc" => Some(Scheme::JsccFc),
            "digital" => Some(Scheme::Digital),
            "noiseless_bound" => Some(Scheme::NoiselessBound),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub scheme: Scheme,
    pub bandwidths: Vec<usize>,
    /// JSCC only.
    pub train_snrs: Vec<SnrDb>,
    pub test_snrs: Vec<SnrDb>,
    /// Digital only.
    pub lambdas: Vec<f64>,
    /// Digital only.
    pub latent_dims: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub metric: Metric,
    pub rate_mode: RateMode,
    pub gallery_view: GalleryView,
    pub extractor: ExtractorKind,
    /// Set when the file gave `synthetic.seed`; otherwise the dataset follows `seed`.
    pub dataset_seed_pinned: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            scheme: Scheme::JsccAe,
            bandwidths: vec![16],
            train_snrs: vec![SnrDb::new(0.0).expect("finite")],
            test_snrs: [-10.0, -6.0, -3.0, 0.0, 3.0, 6.0, 10.0, 20.0]
                .into_iter()
                .map(|v| SnrDb::new(v).expect("finite"))
                .collect(),
            lambdas: vec![0.05, 0.1, 0.5, 1.0, 5.0, 10.0],
            latent_dims: vec![8, 16, 32],
            trials: 10,
            seed: 0,
            output: None,
            metric: Metric::Euclidean,
            rate_mode: RateMode::PerQuery,
            gallery_view: GalleryView::Matched,
            extractor: ExtractorKind::Linear,
            dataset_seed_pinned: false,
        }
    }
}

impl ExperimentConfig {
    /// Replaces the seed, and the synthetic dataset seed unless it is pinned.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let DatasetSource::Synthetic(spec) = &mut self.dataset {
            if !self.dataset_seed_pinned {
                spec.seed = seed;
            }
        }
        self.seed = seed;
        self
    }

    /// Number of result rows the sweep produces.
    pub fn sweep_len(&self) -> usize {
        let (b, tr, te) = (self.bandwidths.len(), self.train_snrs.len(), self.test_snrs.len());
        match self.scheme {
            Scheme::JsccAe | Scheme::JsccFc => b * tr * te,
            Scheme::Digital => b * self.lambdas.len() * self.latent_dims.len() * te,
            Scheme::NoiselessBound => 1,
        }
    }
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid experiment config:\n  {}", .0.join("\n  "))]
pub struct ConfigError(pub Vec<String>);

const KEYS: &[&str] = &[
    "dataset",
    "dataset_path",
    "scheme",
    "bandwidths",
    "train_snrs",
    "test_snrs",
    "lambdas",
    "latent_dims",
    "trials",
    "seed",
    "output",
    "metric",
    "rate_mode",
    "gallery_view",
    "extractor",
    "synthetic.identities",
    "synthetic.samples_per_identity",
    "synthetic.dim",
    "synthetic.center_scale",
    "synthetic.sigma",
    "synthetic.train_fraction",
    "synthetic.queries_per_identity",
    "synthetic.seed",
];

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut p = Parser::default();
    let mut seen = BTreeSet::new();
    let mut cfg = ExperimentConfig::default();
    let mut spec = SyntheticSpec::default();
    let mut dataset_kind = "synthetic".to_string();
    let mut dataset_path = None;
    let mut synthetic_seed = None;
    let mut synthetic_keys = Vec::new();

    for entry in kv::entries(text) {
        let e = match entry {
            Ok(e) => e,
            Err(line) => {
                p.errors.push(format!("line {line}: expected key = value"));
                continue;
            }
        };
        p.line = e.line;
        if !KEYS.contains(&e.key) {
            p.err(format!("unknown key {:?}", e.key));
            continue;
        }
        if !seen.insert(e.key) {
            p.err(format!("duplicate key {:?}", e.key));
            continue;
        }
        if e.key.starts_with("synthetic.") {
            synthetic_keys.push(e.line);
        }
        let v = e.value;
        match e.key {
            "dataset" => match v {
                "synthetic" | "file" => dataset_kind = v.to_string(),
                _ => p.err(format!("dataset must be synthetic or file, got {v:?}")),
            },
            "dataset_path" => {
                if v.is_empty() {
                    p.err("dataset_path is empty".into());
                } else {
                    dataset_path = Some(PathBuf::from(v));
                }
            }
            "scheme" => p.choice("scheme", v, Scheme::parse, &mut cfg.scheme),
            "bandwidths" => p.list("bandwidths", v, positive_int, &mut cfg.bandwidths),
            "train_snrs" => p.list("train_snrs", v, snr, &mut cfg.train_snrs),
            "test_snrs" => p.list("test_snrs", v, snr, &mut cfg.test_snrs),
            "lambdas" => p.list("lambdas", v, positive_real, &mut cfg.lambdas),
            "latent_dims" => p.list("latent_dims", v, positive_int, &mut cfg.latent_dims),
            "trials" => p.one("trials", v, positive_int, &mut cfg.trials),
            "seed" => p.one("seed", v, parsed::<u64>, &mut cfg.seed),
            "output" => cfg.output = Some(PathBuf::from(v)),
            "metric" => p.choice("metric", v, Metric::parse, &mut cfg.metric),
            "rate_mode" => p.choice("rate_mode", v, RateMode::parse, &mut cfg.rate_mode),
            "gallery_view" => p.choice("gallery_view", v, GalleryView::parse, &mut cfg.gallery_view),
            "extractor" => p.choice("extractor", v, ExtractorKind::parse, &mut cfg.extractor),
            "synthetic.identities" => p.one(e.key, v, positive_int, &mut spec.num_identities),
            "synthetic.samples_per_identity" => p.one(e.key, v, positive_int, &mut spec.samples_per_identity),
            "synthetic.dim" => p.one(e.key, v, positive_int, &mut spec.feature_dim),
            "synthetic.center_scale" => p.one(e.key, v, positive_real, &mut spec.cluster_center_scale),
            "synthetic.sigma" => p.one(e.key, v, nonnegative_real, &mut spec.within_class_sigma),
            "synthetic.train_fraction" => p.one(e.key, v, positive_real, &mut spec.train_fraction),
            "synthetic.queries_per_identity" => p.one(e.key, v, positive_int, &mut spec.queries_per_identity),
            "synthetic.seed" => {
                let mut s = 0;
                p.one(e.key, v, parsed::<u64>, &mut s);
                synthetic_seed = Some(s);
            }
            _ => unreachable!("key list and match arms agree"),
        }
    }

    p.line = 0;
    spec.seed = synthetic_seed.unwrap_or(cfg.seed);
    cfg.dataset_seed_pinned = synthetic_seed.is_some();
    cfg.dataset = if dataset_kind == "file" {
        if !synthetic_keys.is_empty() {
            p.err("synthetic.* keys given with dataset = file".into());
        }
        match dataset_path {
            Some(path) => DatasetSource::File(path),
            None => {
                p.err("dataset = file needs dataset_path".into());
                DatasetSource::Synthetic(spec)
            }
        }
    } else {
        if dataset_path.is_some() {
            p.err("dataset_path given with dataset = synthetic".into());
        }
        if let Err(e) = spec.validate() {
            p.err(e.to_string());
        }
        DatasetSource::Synthetic(spec)
    };
    if cfg.gallery_view == GalleryView::Extracted && cfg.scheme == Scheme::JsccFc {
        p.err("gallery_view = extracted needs a decoder back to feature space (not available for jscc_fc)".into());
    }
    if let DatasetSource::Synthetic(spec) = &cfg.dataset {
        let d = spec.feature_dim;
        for &b in &cfg.bandwidths {
            if b > d && matches!(cfg.scheme, Scheme::JsccAe | Scheme::JsccFc) {
                p.err(format!("bandwidth {b} exceeds synthetic.dim {d}"));
            }
        }
    }
    if p.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError(p.errors))
    }
}

#[derive(Default)]
struct Parser {
    line: usize,
    errors: Vec<String>,
}

impl Parser {
    fn err(&mut self, msg: String) {
        if self.line == 0 {
            self.errors.push(msg);
        } else {
            self.errors.push(format!("line {}: {msg}", self.line));
        }
    }

    fn one<T>(&mut self, key: &str, v: &str, f: fn(&str) -> Result<T, String>, out: &mut T) {
        match f(v) {
            Ok(x) => *out = x,
            Err(why) => self.err(format!("{key}: {why}")),
        }
    }

    fn choice<T>(&mut self, key: &str, v: &str, f: fn(&str) -> Option<T>, out: &mut T) {
        match f(v) {
            Some(x) => *out = x,
            None => self.err(format!("{key}: unrecognized value {v:?}")),
        }
    }

    fn list<T>(&mut self, key: &str, v: &str, f: fn(&str) -> Result<T, String>, out: &mut Vec<T>) {
        if v.is_empty() {
            self.err(format!("{key}: empty list"));
            return;
        }
        let mut items = Vec::new();
        let mut ok = true;
        for item in v.split(',') {
            match f(item.trim()) {
                Ok(x) => items.push(x),
                Err(why) => {
                    self.err(format!("{key}: {why}"));
                    ok = false;
                }
            }
        }
        if ok {
            *out = items;
        }
    }
}

fn parsed<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {s:?}"))
}

fn positive_int(s: &str) -> Result<usize, String> {
    match s.parse::<i64>() {
        Ok(v) if v >= 1 => Ok(v as usize),
        Ok(v) => Err(format!("must be a positive integer, got {v}")),
        Err(_) => Err(format!("expected an integer, got {s:?}")),
    }
}

fn positive_real(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(_) => Err(format!("expected a number, got {s:?}")),
    }
}

fn nonnegative_real(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be nonnegative and finite, got {v}")),
        Err(_) => Err(format!("expected a number, got {s:?}")),
    }
}

fn snr(s: &str) -> Result<SnrDb, String> {
    s.parse::<SnrDb>().map_err(|_| format!("expected an SNR in dB or inf, got {s:?}"))
}
