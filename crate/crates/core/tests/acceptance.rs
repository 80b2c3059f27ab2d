//! Acceptance suite: one line per criterion, then a summary.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail the
//! process unless `FEATLINK_ACCEPTANCE_STRICT=1`; any other failure does.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use featlink_core::channel::{capacity_bits_per_use, min_snr_for_rate, power_normalize, snr_db_to_linear, SnrDb};
use featlink_core::data::{generate_synthetic, FeatureDataset, SyntheticSpec};
use featlink_core::digital::{
    arithmetic_decode, arithmetic_encode, train_digital, DigitalConfig, DigitalModel, DigitalQueryReport, RateMode,
};
use featlink_core::eval::EvalOptions;
use featlink_core::experiment::{parse_config, run_experiment, RunOptions};
use featlink_core::jscc::{evaluate_jscc, train_jscc, GalleryView, JsccConfig, JsccModel};
use featlink_core::nn::Matrix;
use featlink_core::retrieval::{top_k_accuracy, Metric};
use featlink_core::seed;
use rand::Rng;

const KNOWN_FAILURES: [&str; 2] = ["scheme ordering", "bandwidth monotonicity"];
const TOL: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Datasets and trained models shared between criteria.
#[derive(Default)]
struct Lab {
    datasets: HashMap<u64, FeatureDataset>,
    jscc: HashMap<String, JsccModel>,
    digital: HashMap<String, DigitalModel>,
}

impl Lab {
    fn dataset(&mut self, seed: u64) -> &FeatureDataset {
        self.datasets
            .entry(seed)
            .or_insert_with(|| generate_synthetic(&SyntheticSpec { seed, ..SyntheticSpec::default() }).unwrap())
    }

    fn jscc(&mut self, seed: u64, config: JsccConfig) -> JsccModel {
        let config = config.with_seed(seed);
        let key = format!("{seed} {config:?}");
        if !self.jscc.contains_key(&key) {
            let train = self.dataset(seed).train_set().unwrap();
            let model = train_jscc(&train, &config).unwrap().model;
            self.jscc.insert(key.clone(), model);
        }
        self.jscc[&key].clone()
    }

    fn digital(&mut self, seed: u64, m: usize, lambda: f64) -> DigitalModel {
        let key = format!("{seed} {m} {lambda}");
        if !self.digital.contains_key(&key) {
            let train = self.dataset(seed).train_set().unwrap();
            let model = train_digital(&train, &DigitalConfig::new(m, lambda).with_seed(seed)).unwrap().model;
            self.digital.insert(key.clone(), model);
        }
        self.digital[&key].clone()
    }

    fn jscc_accuracy(&mut self, seed: u64, model: &JsccModel, test_db: f64) -> f64 {
        let ds = self.dataset(seed);
        let (q, ids) = ds.queries();
        let opts = EvalOptions { trials: 50, seed, metric: Metric::Euclidean };
        evaluate_jscc(model, &q, &ids, &ds.gallery().unwrap(), snr(test_db), GalleryView::Matched, &opts).unwrap()
    }

    fn report(&mut self, seed: u64, model: &DigitalModel, rate: RateMode) -> DigitalQueryReport {
        let ds = self.dataset(seed);
        let (q, ids) = ds.queries();
        DigitalQueryReport::new(model, &q, &ids, &ds.gallery().unwrap(), Metric::Euclidean, rate).unwrap()
    }

    fn bound(&mut self, seed: u64) -> f64 {
        let ds = self.dataset(seed);
        let (q, ids) = ds.queries();
        top_k_accuracy(&q, &ids, &ds.gallery().unwrap(), 1, Metric::Euclidean).unwrap()
    }

    fn chance(&mut self, seed: u64) -> f64 {
        1.0 / self.dataset(seed).gallery().unwrap().identity_count() as f64
    }
}

fn snr(db: f64) -> SnrDb {
    SnrDb::new(db).unwrap()
}

fn ae(b: usize) -> JsccConfig {
    JsccConfig::ae(64, b).with_train_snr(snr(0.0))
}

fn fc(b: usize) -> JsccConfig {
    JsccConfig::fc(64, b).with_train_snr(snr(0.0))
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn gradients(_: &mut Lab) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, check) in common::CHECKS {
        let errs: Vec<f64> = (0..1000u64).filter_map(check).take(200).collect();
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        pass &= errs.len() >= 100 && worst <= common::TOLERANCE;
        parts.push(format!("{name} {} cases max {worst:.1e}", errs.len()));
    }
    outcome(pass, parts.join("; "))
}

fn channel(_: &mut Lab) -> Outcome {
    let measured: Vec<f64> = [-10.0, 0.0, 10.0]
        .iter()
        .enumerate()
        .map(|(i, &db)| common::empirical_snr_db(db, 1_000_000, i as u64))
        .collect();
    let snr_ok = measured.iter().zip([-10.0, 0.0, 10.0]).all(|(m, t)| (m - t).abs() < 0.1);

    let mut rng = seed::rng(1, &[seed::tag("acceptance channel")]);
    let mut norm_err: f64 = 0.0;
    let mut trip_err: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..256);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let p = rng.random_range(0.1..10.0);
        let x = power_normalize(&v, p).unwrap();
        norm_err = norm_err.max((x.average_power() - p).abs() / p);
        let b = rng.random_range(1..128);
        let bits = rng.random_range(0.01..16.0) * b as f64;
        let db = min_snr_for_rate(bits, b).unwrap();
        let back = capacity_bits_per_use(snr_db_to_linear(db)).unwrap() * b as f64;
        trip_err = trip_err.max((back - bits).abs() / bits);
    }
    let anchor = capacity_bits_per_use(3.0).unwrap();
    outcome(
        snr_ok && norm_err <= 1e-9 && trip_err <= 1e-9 && anchor == 1.0,
        format!(
            "measured dB {} at [-10, 0, 10]; power err {norm_err:.1e}; round trip err {trip_err:.1e}; C(3) = {anchor}",
            fmt(&measured)
        ),
    )
}

fn coder(_: &mut Lab) -> Outcome {
    let streams = 10_000u64;
    let (mut coded, mut ideal, mut lossless) = (0.0, 0.0, 0u64);
    for s in 0..streams {
        let case = common::coder_case(s, 16 + (s as usize % 497));
        let stream = arithmetic_encode(&case.symbols, &case.tables).unwrap();
        if arithmetic_decode(&stream, &case.tables, case.symbols.len()).ok().as_ref() == Some(&case.symbols) {
            lossless += 1;
        }
        coded += stream.bit_len() as f64;
        ideal += case.tables.ideal_bits(&case.symbols).unwrap();
    }
    let (coded, ideal) = (coded / streams as f64, ideal / streams as f64);
    outcome(
        lossless == streams && coded <= ideal * 1.01 + 32.0,
        format!(
            "{lossless}/{streams} lossless; mean {coded:.1} bits vs ideal {ideal:.1} (limit {:.1})",
            ideal * 1.01 + 32.0
        ),
    )
}

fn cliff(lab: &mut Lab) -> Outcome {
    let b = 16;
    let model = lab.digital(0, 16, 10.0);
    let report = lab.report(0, &model, RateMode::PerQuery);
    let chance = lab.chance(0);
    let plateau = report.noiseless_accuracy();
    let lo = report.bits().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = report.bits().iter().cloned().fold(0.0, f64::max);
    let (lo_db, hi_db) = (min_snr_for_rate(lo, b).unwrap(), min_snr_for_rate(hi, b).unwrap());
    let step_db = min_snr_for_rate(report.mean_bits(), b).unwrap();
    let opts = EvalOptions::default().with_trials(50);
    let grid: Vec<f64> = ((lo_db.floor() as i32 - 5)..=(hi_db.ceil() as i32 + 5)).map(f64::from).collect();
    let accs: Vec<f64> = grid.iter().map(|&g| report.accuracy(snr(g), b, &opts)).collect();

    let below = grid.iter().zip(&accs).filter(|(g, _)| **g < lo_db).all(|(_, a)| (a - chance).abs() <= 0.03);
    let above = grid.iter().zip(&accs).filter(|(g, _)| **g >= hi_db).all(|(_, a)| *a == plateau);
    let half = 0.5 * (chance + plateau);
    let crossing = grid.iter().zip(&accs).find(|(_, a)| **a >= half).map(|(g, _)| *g);
    let located = crossing.is_some_and(|c| (c - step_db).abs() <= 1.0);
    outcome(
        below && above && located && plateau > chance + 0.5,
        format!(
            "chance {chance:.3}, plateau {plateau:.3}, bits {lo:.0}..{hi:.0} (mean {:.1}); threshold {step_db:.2} dB, \
             half-height crossing at {crossing:?} dB; below-cliff within 0.03 of chance: {below}; full plateau from {hi_db:.2} dB: {above}",
            report.mean_bits()
        ),
    )
}

fn graceful(lab: &mut Lab) -> Outcome {
    let model = lab.jscc(0, ae(16));
    let grid = [-10.0, -6.0, -3.0, 0.0, 3.0, 6.0, 10.0, 20.0];
    let accs: Vec<f64> = grid.iter().map(|&g| lab.jscc_accuracy(0, &model, g)).collect();
    let bound = lab.bound(0);
    let monotone = accs.windows(2).all(|w| w[1] >= w[0] - TOL);
    let top = accs[7] >= bound - TOL;
    outcome(monotone && top, format!("AE B=16 at {:?} dB: {}; bound {bound:.3}", grid, fmt(&accs)))
}

fn ordering(lab: &mut Lab) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in 0..3u64 {
        let a = lab.jscc(s, ae(16));
        let a = lab.jscc_accuracy(s, &a, 0.0);
        let f = lab.jscc(s, fc(16));
        let f = lab.jscc_accuracy(s, &f, 0.0);
        // best digital point over the rate/accuracy grid at the same bandwidth
        let mut d: f64 = 0.0;
        for m in [8, 16, 32] {
            for l in [0.1, 1.0, 10.0] {
                let model = lab.digital(s, m, l);
                let r = lab.report(s, &model, RateMode::PerQuery);
                let opts = EvalOptions { trials: 50, seed: s, metric: Metric::Euclidean };
                d = d.max(r.accuracy(snr(0.0), 16, &opts));
            }
        }
        pass &= a >= f - TOL && f >= d - TOL;
        parts.push(format!("seed {s}: AE {a:.3} FC {f:.3} digital {d:.3}"));
    }
    outcome(pass, parts.join("; "))
}

fn bandwidth(lab: &mut Lab) -> Outcome {
    let bws = [4, 8, 16, 32];
    let accs: Vec<f64> = bws
        .iter()
        .map(|&b| {
            let m = lab.jscc(0, ae(b));
            lab.jscc_accuracy(0, &m, 0.0)
        })
        .collect();
    let gains: Vec<f64> = accs.windows(2).map(|w| w[1] - w[0]).collect();
    let monotone = gains.iter().all(|g| *g >= -TOL);
    let diminishing = gains[2] <= gains[0] && gains[2] <= gains[1];
    outcome(monotone && diminishing, format!("AE at B {bws:?}: {}; gains {}", fmt(&accs), fmt(&gains)))
}

fn rate_consistency(lab: &mut Lab) -> Outcome {
    let ds = lab.dataset(0).clone();
    let config = DigitalConfig::new(16, 10.0).with_seed(0);
    let t = train_digital(&ds.train_set().unwrap(), &config).unwrap();
    let (q, _) = ds.queries();
    let g = ds.gallery().unwrap();
    let rows: Vec<&[f64]> = q.row_iter().chain(g.features().row_iter()).collect();
    let eval = Matrix::from_rows(&rows);
    let sym = t.model.symbols(&eval).unwrap();
    let coded = arithmetic_encode(&sym, &t.model.tables()).unwrap().bit_len() as f64 / eval.rows() as f64;
    let rel = (t.final_rate_bits - coded).abs() / coded;
    outcome(
        rel <= 0.05,
        format!(
            "m=16 lambda=10: training estimate {:.2} bits, coded {coded:.2} bits per vector, {:.1}% apart",
            t.final_rate_bits,
            rel * 100.0
        ),
    )
}

fn determinism(_: &mut Lab) -> Outcome {
    let bodies = [
        "scheme = jscc_ae\nbandwidths = 8\ntrain_snrs = 0\ntest_snrs = -3, 0, 10, inf\n",
        "scheme = jscc_fc\nbandwidths = 8, 16\ntrain_snrs = 0, inf\ntest_snrs = -3, 0, 10\n",
        "scheme = digital\nbandwidths = 8, 16\nlambdas = 1, 10\nlatent_dims = 8\ntest_snrs = 0, 10, 20\n",
        "scheme = noiseless_bound\n",
    ];
    let mut same = 0;
    for body in bodies {
        let c = parse_config(body).unwrap().with_seed(3);
        let a = run_experiment(&c, &RunOptions::default()).unwrap().table.to_csv();
        let b = run_experiment(&c, &RunOptions { jobs: Some(2), cache_dir: None }).unwrap().table.to_csv();
        same += usize::from(a == b);
    }
    outcome(same == bodies.len(), format!("{same}/{} sweep CSVs byte-identical across two runs", bodies.len()))
}

type Criterion = fn(&mut Lab) -> Outcome;

fn main() -> ExitCode {
    let strict = std::env::var("FEATLINK_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(&str, Criterion); 9] = [
        ("gradient suite", gradients),
        ("channel suite", channel),
        ("coder suite", coder),
        ("cliff effect", cliff),
        ("graceful degradation", graceful),
        ("scheme ordering", ordering),
        ("bandwidth monotonicity", bandwidth),
        ("rate consistency", rate_consistency),
        ("determinism", determinism),
    ];
    let mut lab = Lab::default();
    let (mut passed, mut known, mut unexpected) = (0, 0, 0);
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run(&mut lab);
        let secs = start.elapsed().as_secs_f64();
        let tag = if o.pass {
            passed += 1;
            "[PASS]"
        } else if KNOWN_FAILURES.contains(&name) {
            known += 1;
            "[FAIL] (known, documented)"
        } else {
            unexpected += 1;
            "[FAIL]"
        };
        println!("{tag} {name}: {} ({secs:.1}s)", o.detail);
    }
    println!(
        "acceptance: {passed}/{} passed, {known} known failures, {unexpected} unexpected failures",
        criteria.len()
    );
    if unexpected > 0 || (strict && known > 0) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
