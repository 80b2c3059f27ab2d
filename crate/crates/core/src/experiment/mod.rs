//! Config-driven sweeps: train the models a sweep needs (each distinct training
//! config once), evaluate every sweep point, and collect one result row per point.

mod config;
mod table;

pub use config::{parse_config, ConfigError, DatasetSource, ExperimentConfig, Scheme};
pub use table::{plot_data, PlotAxis, ResultRow, ResultTable, TableError, COLUMNS};

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channel::SnrDb;
use crate::data::{generate_synthetic, read_feature_file, DataError, FeatureDataset, LabeledSet};
use crate::digital::{load_digital, save_digital, train_digital, DigitalConfig, DigitalModel, DigitalQueryReport};
use crate::eval::EvalOptions;
use crate::jscc::{evaluate_jscc, load_jscc, save_jscc, train_jscc, JsccConfig, JsccModel};
use crate::nn::Matrix;
use crate::retrieval::{top_k_accuracy, Gallery};
use crate::train::TrainingLog;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    /// Trained models are stored here and reused across runs.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub table: ResultTable,
    /// Models trained in this run (one per distinct training config not found on disk).
    pub trained: usize,
    /// Models read from the on-disk cache.
    pub loaded: usize,
    /// Logs of the models trained in this run, in sweep order.
    pub logs: Vec<TrainingLog>,
}

pub fn load_dataset(source: &DatasetSource) -> Result<FeatureDataset, DataError> {
    match source {
        DatasetSource::Synthetic(spec) => generate_synthetic(spec),
        DatasetSource::File(path) => read_feature_file(path),
    }
}

#[derive(Debug, Clone)]
enum Job {
    Jscc(JsccConfig),
    Digital(DigitalConfig),
}

impl Job {
    fn kind(&self) -> &'static str {
        match self {
            Job::Jscc(_) => "jscc",
            Job::Digital(_) => "digital",
        }
    }

    /// Content hash of everything that determines the trained weights.
    fn key(&self, dataset_hash: &str) -> String {
        let desc = match self {
            Job::Jscc(c) => format!("{c:?}"),
            Job::Digital(c) => format!("{c:?}"),
        };
        let mut h = Sha256::new();
        h.update(self.kind());
        h.update([0]);
        h.update(desc);
        h.update([0]);
        h.update(dataset_hash);
        hex::encode(h.finalize())
    }
}

enum Trained {
    Jscc(JsccModel),
    Digital(DigitalModel, DigitalQueryReport),
}

struct Outcome {
    model: Result<Trained, String>,
    log: Option<TrainingLog>,
    loaded: bool,
}

struct EvalData {
    train: LabeledSet,
    queries: Matrix,
    query_ids: Vec<u32>,
    gallery: Gallery,
}

pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, ExperimentError> {
    let dataset = load_dataset(&config.dataset)?;
    check_against_dataset(config, &dataset)?;
    let (queries, query_ids) = dataset.queries();
    let data = EvalData { train: dataset.train_set()?, queries, query_ids, gallery: dataset.gallery()? };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;
    pool.install(|| run_sweep(config, opts, &data, &dataset.content_hash()))
}

fn check_against_dataset(config: &ExperimentConfig, ds: &FeatureDataset) -> Result<(), ConfigError> {
    let d = ds.dim();
    let mut errs = Vec::new();
    if matches!(config.scheme, Scheme::JsccAe | Scheme::JsccFc) {
        for &b in &config.bandwidths {
            if b > d {
                errs.push(format!("bandwidth {b} exceeds the feature dimension {d}"));
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(ConfigError(errs))
    }
}

fn jobs(config: &ExperimentConfig, d: usize) -> Vec<Job> {
    match config.scheme {
        Scheme::JsccAe | Scheme::JsccFc => {
            let mut out = Vec::new();
            for &b in &config.bandwidths {
                for &snr in &config.train_snrs {
                    let mut c =
                        if config.scheme == Scheme::JsccAe { JsccConfig::ae(d, b) } else { JsccConfig::fc(d, b) };
                    c = c.with_train_snr(snr).with_seed(config.seed);
                    c.extractor = config.extractor;
                    out.push(Job::Jscc(c));
                }
            }
            out
        }
        // the digital model does not depend on the bandwidth
        Scheme::Digital => config
            .lambdas
            .iter()
            .flat_map(|&l| {
                config.latent_dims.iter().map(move |&m| Job::Digital(DigitalConfig::new(m, l).with_seed(config.seed)))
            })
            .collect(),
        Scheme::NoiselessBound => Vec::new(),
    }
}

fn run_sweep(
    config: &ExperimentConfig,
    opts: &RunOptions,
    data: &EvalData,
    dataset_hash: &str,
) -> Result<RunReport, ExperimentError> {
    let all = jobs(config, data.train.features.cols());
    let mut keys = Vec::with_capacity(all.len());
    let mut unique: Vec<(String, Job)> = Vec::new();
    for job in all {
        let key = job.key(dataset_hash);
        if !unique.iter().any(|(k, _)| *k == key) {
            unique.push((key.clone(), job));
        }
        keys.push(key);
    }
    let outcomes: Vec<Outcome> = unique.par_iter().map(|(key, job)| obtain(job, key, config, opts, data)).collect();
    let mut trained = 0;
    let mut loaded = 0;
    let mut logs = Vec::new();
    let mut models: HashMap<&str, &Result<Trained, String>> = HashMap::new();
    for ((key, _), out) in unique.iter().zip(&outcomes) {
        if out.loaded {
            loaded += 1;
        }
        if let Some(log) = &out.log {
            trained += 1;
            logs.push(log.clone());
        }
        models.insert(key, &out.model);
    }

    let eval = EvalOptions { trials: config.trials, seed: config.seed, metric: config.metric };
    let points = points(config, &keys);
    let rows = points.par_iter().map(|p| evaluate_point(p, config, &eval, data, p.key.map(|k| models[k]))).collect();
    Ok(RunReport { table: ResultTable { rows }, trained, loaded, logs })
}

struct Point<'a> {
    bandwidth: Option<usize>,
    train_snr: Option<SnrDb>,
    test_snr: Option<SnrDb>,
    lambda: Option<f64>,
    latent_dim: Option<usize>,
    key: Option<&'a str>,
}

/// Sweep points in output order; `keys` follows [`jobs`] order.
fn points<'a>(config: &ExperimentConfig, keys: &'a [String]) -> Vec<Point<'a>> {
    let mut out = Vec::new();
    match config.scheme {
        Scheme::JsccAe | Scheme::JsccFc => {
            let mut k = keys.iter();
            for &b in &config.bandwidths {
                for &tr in &config.train_snrs {
                    let key = k.next().expect("one job per (B, train SNR)");
                    for &te in &config.test_snrs {
                        out.push(Point {
                            bandwidth: Some(b),
                            train_snr: Some(tr),
                            test_snr: Some(te),
                            lambda: None,
                            latent_dim: None,
                            key: Some(key),
                        });
                    }
                }
            }
        }
        Scheme::Digital => {
            for &b in &config.bandwidths {
                let mut k = keys.iter();
                for &l in &config.lambdas {
                    for &m in &config.latent_dims {
                        let key = k.next().expect("one job per (lambda, m)");
                        for &te in &config.test_snrs {
                            out.push(Point {
                                bandwidth: Some(b),
                                train_snr: None,
                                test_snr: Some(te),
                                lambda: Some(l),
                                latent_dim: Some(m),
                                key: Some(key),
                            });
                        }
                    }
                }
            }
        }
        Scheme::NoiselessBound => out.push(Point {
            bandwidth: None,
            train_snr: None,
            test_snr: None,
            lambda: None,
            latent_dim: None,
            key: None,
        }),
    }
    out
}

fn obtain(job: &Job, key: &str, config: &ExperimentConfig, opts: &RunOptions, data: &EvalData) -> Outcome {
    let dir = opts.cache_dir.as_ref().map(|d| d.join(format!("{}-{}", job.kind(), &key[..16])));
    if let Some(dir) = dir.as_deref().filter(|d| d.exists()) {
        match load(job, dir, config, data) {
            Ok(model) => {
                log::info!("loaded cached {} model from {}", job.kind(), dir.display());
                return Outcome { model: Ok(model), log: None, loaded: true };
            }
            Err(e) => log::warn!("ignoring cached model at {}: {e}", dir.display()),
        }
    }
    let (model, log) = match train(job, config, data) {
        Ok(x) => x,
        Err(e) => {
            log::error!("training failed for {} model {}: {e}", job.kind(), &key[..16]);
            return Outcome { model: Err(e), log: None, loaded: false };
        }
    };
    for stage in log.stages() {
        let (epochs, runs) = log.schedule(stage);
        log::info!("{} {}: {stage} {epochs} epochs, lr runs {runs:?}", job.kind(), &key[..16]);
    }
    if let Some(dir) = &dir {
        let saved = match &model {
            Trained::Jscc(m) => save_jscc(m, dir).map_err(|e| e.to_string()),
            Trained::Digital(m, _) => save_digital(m, dir).map_err(|e| e.to_string()),
        };
        if let Err(e) = saved {
            log::warn!("could not cache model at {}: {e}", dir.display());
        }
    }
    Outcome { model: Ok(model), log: Some(log), loaded: false }
}

fn train(job: &Job, config: &ExperimentConfig, data: &EvalData) -> Result<(Trained, TrainingLog), String> {
    match job {
        Job::Jscc(c) => {
            let t = train_jscc(&data.train, c).map_err(|e| e.to_string())?;
            Ok((Trained::Jscc(t.model), t.log))
        }
        Job::Digital(c) => {
            let t = train_digital(&data.train, c).map_err(|e| e.to_string())?;
            let report = digital_report(&t.model, config, data)?;
            Ok((Trained::Digital(t.model, report), t.log))
        }
    }
}

fn load(job: &Job, dir: &Path, config: &ExperimentConfig, data: &EvalData) -> Result<Trained, String> {
    match job {
        Job::Jscc(_) => load_jscc(dir).map(Trained::Jscc).map_err(|e| e.to_string()),
        Job::Digital(_) => {
            let model = load_digital(dir).map_err(|e| e.to_string())?;
            let report = digital_report(&model, config, data)?;
            Ok(Trained::Digital(model, report))
        }
    }
}

fn digital_report(
    model: &DigitalModel,
    config: &ExperimentConfig,
    data: &EvalData,
) -> Result<DigitalQueryReport, String> {
    DigitalQueryReport::new(model, &data.queries, &data.query_ids, &data.gallery, config.metric, config.rate_mode)
        .map_err(|e| e.to_string())
}

fn evaluate_point(
    p: &Point<'_>,
    config: &ExperimentConfig,
    eval: &EvalOptions,
    data: &EvalData,
    model: Option<&Result<Trained, String>>,
) -> ResultRow {
    let mut row = ResultRow {
        scheme: config.scheme,
        bandwidth: p.bandwidth,
        train_snr: p.train_snr,
        test_snr: p.test_snr,
        lambda: p.lambda,
        latent_dim: p.latent_dim,
        mean_bits: None,
        top1_accuracy: None,
        trials: eval.trials,
        seed: config.seed,
        error: None,
    };
    let noiseless = p.test_snr.is_none_or(SnrDb::is_noiseless);
    if noiseless {
        row.trials = 1;
    }
    let result = match model {
        None => {
            top_k_accuracy(&data.queries, &data.query_ids, &data.gallery, 1, config.metric).map_err(|e| e.to_string())
        }
        Some(Err(e)) => Err(format!("training failed: {e}")),
        Some(Ok(Trained::Jscc(m))) => evaluate_jscc(
            m,
            &data.queries,
            &data.query_ids,
            &data.gallery,
            p.test_snr.expect("jscc points have a test SNR"),
            config.gallery_view,
            eval,
        )
        .map_err(|e| e.to_string()),
        Some(Ok(Trained::Digital(_, report))) => {
            row.mean_bits = Some(report.mean_bits());
            Ok(report.accuracy(
                p.test_snr.expect("digital points have a test SNR"),
                p.bandwidth.expect("digital points have a bandwidth"),
                eval,
            ))
        }
    };
    match result {
        Ok(acc) => row.top1_accuracy = Some(acc),
        Err(e) => row.error = Some(e),
    }
    row
}
