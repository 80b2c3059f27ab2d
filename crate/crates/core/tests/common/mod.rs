//! Central-difference gradient checks shared by the gradient tests and the
//! acceptance suite. Each check builds a random problem from `seed` and returns
//! the largest relative error between analytic and numeric gradients, or `None`
//! when the draw lands too close to a kink to be differentiable at `EPS`.

#![allow(dead_code)]

use featlink_core::channel::{normalize_rows, normalize_rows_backward, NormGradient};
use featlink_core::digital::{EntropyModel, PARAMS_PER_DIM};
use featlink_core::nn::{backward, cross_entropy, forward, l1_loss, Activation, DenseLayer, Matrix, MlpModel};
use featlink_core::seed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-3)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn rng(seed: u64, what: &str) -> ChaCha8Rng {
    seed::rng(seed, &[seed::tag(what)])
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

fn central(f: &mut impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + EPS) - f(x - EPS)) / (2.0 * EPS)
}

/// Random 1–3 layer network, loss `Σ output ⊙ R`; checks weight, bias and input gradients.
pub fn dense_layers(seed: u64) -> Option<f64> {
    let mut r = rng(seed, "dense");
    let depth = r.random_range(1..=3);
    let mut dims = vec![r.random_range(1..=5)];
    for _ in 0..depth {
        dims.push(r.random_range(1..=5));
    }
    let acts = [Activation::Identity, Activation::Relu, Activation::LeakyRelu];
    let layers = dims
        .windows(2)
        .map(|w| {
            let mut l = DenseLayer::he_uniform(w[0], w[1], acts[r.random_range(0..3)], &mut r);
            l.bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
            l
        })
        .collect();
    let model = MlpModel::from_layers(layers).ok()?;
    let n = r.random_range(1..=4);
    let x = random_matrix(&mut r, n, dims[0], 1.0);
    let weights = random_matrix(&mut r, n, *dims.last()?, 1.0);
    if near_kink(&model, &x) {
        return None;
    }
    let loss = |m: &MlpModel, x: &Matrix| -> f64 {
        let y = m.predict(x).expect("shapes fixed");
        y.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = forward(&model, &x).ok()?;
    let back = backward(&model, &cache, &weights).ok()?;

    let mut worst: f64 = 0.0;
    for li in 0..model.layers().len() {
        for k in 0..model.layers()[li].weights.as_slice().len() {
            let mut f = |v: f64| {
                let mut m = model.clone();
                m.layers_mut()[li].weights.as_mut_slice()[k] = v;
                loss(&m, &x)
            };
            let num = central(&mut f, model.layers()[li].weights.as_slice()[k]);
            worst = worst.max(rel_err(back.grads.layers[li].weights.as_slice()[k], num));
        }
        for k in 0..model.layers()[li].bias.len() {
            let mut f = |v: f64| {
                let mut m = model.clone();
                m.layers_mut()[li].bias[k] = v;
                loss(&m, &x)
            };
            let num = central(&mut f, model.layers()[li].bias[k]);
            worst = worst.max(rel_err(back.grads.layers[li].bias[k], num));
        }
    }
    for k in 0..x.as_slice().len() {
        let mut f = |v: f64| {
            let mut xp = x.clone();
            xp.as_mut_slice()[k] = v;
            loss(&model, &xp)
        };
        let num = central(&mut f, x.as_slice()[k]);
        worst = worst.max(rel_err(back.input_grad.as_slice()[k], num));
    }
    Some(worst)
}

/// True when some pre-activation sits within `100·EPS` of a ReLU kink.
fn near_kink(model: &MlpModel, x: &Matrix) -> bool {
    let mut h = x.clone();
    for layer in model.layers() {
        let pre = h.matmul_transpose(&layer.weights);
        let mut z = pre.clone();
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        if layer.activation != Activation::Identity && z.as_slice().iter().any(|v| v.abs() < 100.0 * EPS) {
            return true;
        }
        h = z.map(|v| layer.activation.apply(v));
    }
    false
}

pub fn cross_entropy_logits(seed: u64) -> Option<f64> {
    let mut r = rng(seed, "cross entropy");
    let n = r.random_range(1..=5);
    let c = r.random_range(2..=6);
    let logits = random_matrix(&mut r, n, c, 4.0);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let (_, grad) = cross_entropy(&logits, &labels).ok()?;
    let mut worst: f64 = 0.0;
    for k in 0..logits.as_slice().len() {
        let mut f = |v: f64| {
            let mut l = logits.clone();
            l.as_mut_slice()[k] = v;
            cross_entropy(&l, &labels).expect("valid").0
        };
        worst = worst.max(rel_err(grad.as_slice()[k], central(&mut f, logits.as_slice()[k])));
    }
    Some(worst)
}

/// L1 with every |prediction − target| above 1e-2.
pub fn l1(seed: u64) -> Option<f64> {
    let mut r = rng(seed, "l1");
    let n = r.random_range(1..=5);
    let d = r.random_range(1..=6);
    let target = random_matrix(&mut r, n, d, 2.0);
    let pred = Matrix::from_vec(
        n,
        d,
        target
            .as_slice()
            .iter()
            .map(|t| {
                let gap = r.random_range(1e-2..1.0);
                if r.random_bool(0.5) {
                    t + gap
                } else {
                    t - gap
                }
            })
            .collect(),
    );
    let (_, grad) = l1_loss(&pred, &target).ok()?;
    let mut worst: f64 = 0.0;
    for k in 0..pred.as_slice().len() {
        let mut f = |v: f64| {
            let mut p = pred.clone();
            p.as_mut_slice()[k] = v;
            l1_loss(&p, &target).expect("valid").0
        };
        worst = worst.max(rel_err(grad.as_slice()[k], central(&mut f, pred.as_slice()[k])));
    }
    Some(worst)
}

fn random_entropy_model(r: &mut ChaCha8Rng, dims: usize) -> EntropyModel {
    let base = EntropyModel::new(dims, 255).expect("valid dims");
    let params = base.params().iter().map(|p| p + r.random_range(-0.5..0.5)).collect();
    EntropyModel::from_params(dims, 255, params).expect("same layout")
}

/// Rate loss gradient with respect to the latents.
pub fn rate_latents(seed: u64) -> Option<f64> {
    let mut r = rng(seed, "rate latents");
    let dims = r.random_range(1..=4);
    let n = r.random_range(1..=4);
    let model = random_entropy_model(&mut r, dims);
    let latents = random_matrix(&mut r, n, dims, 6.0);
    let loss = model.rate_bits(&latents).ok()?;
    let mut worst: f64 = 0.0;
    for k in 0..latents.as_slice().len() {
        let mut f = |v: f64| {
            let mut l = latents.clone();
            l.as_mut_slice()[k] = v;
            model.rate_bits(&l).expect("valid").bits
        };
        worst = worst.max(rel_err(loss.latent_grad.as_slice()[k], central(&mut f, latents.as_slice()[k])));
    }
    Some(worst)
}

/// Rate loss gradient with respect to the entropy model's parameters.
pub fn entropy_params(seed: u64) -> Option<f64> {
    let mut r = rng(seed, "entropy params");
    let dims = r.random_range(1..=2);
    let n = r.random_range(1..=4);
    let model = random_entropy_model(&mut r, dims);
    let latents = random_matrix(&mut r, n, dims, 4.0);
    let loss = model.rate_bits(&latents).ok()?;
    let mut worst: f64 = 0.0;
    for k in 0..dims * PARAMS_PER_DIM {
        let mut f = |v: f64| {
            let mut m = model.clone();
            m.params_mut()[k] = v;
            m.rate_bits(&latents).expect("valid").bits
        };
        worst = worst.max(rel_err(loss.param_grad[k], central(&mut f, model.params()[k])));
    }
    Some(worst)
}

/// Exact power-normalization backward pass, loss `Σ normalized ⊙ R`.
pub fn power_normalization(seed: u64) -> Option<f64> {
    let mut r = rng(seed, "normalize");
    let n = r.random_range(1..=3);
    let b = r.random_range(1..=6);
    let x = random_matrix(&mut r, n, b, 2.0);
    let weights = random_matrix(&mut r, n, b, 1.0);
    let (y, scales) = normalize_rows(&x, 1.0).ok()?;
    let grad = normalize_rows_backward(&weights, &y, &scales, NormGradient::Exact);
    let mut worst: f64 = 0.0;
    for k in 0..x.as_slice().len() {
        let mut f = |v: f64| {
            let mut xp = x.clone();
            xp.as_mut_slice()[k] = v;
            let (yp, _) = normalize_rows(&xp, 1.0).expect("nonzero rows");
            yp.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum()
        };
        worst = worst.max(rel_err(grad.as_slice()[k], central(&mut f, x.as_slice()[k])));
    }
    Some(worst)
}

pub type Check = fn(u64) -> Option<f64>;

pub const CHECKS: [(&str, Check); 6] = [
    ("dense layers", dense_layers),
    ("cross-entropy", cross_entropy_logits),
    ("l1", l1),
    ("rate loss (latents)", rate_latents),
    ("entropy model (parameters)", entropy_params),
    ("power normalization", power_normalization),
];

/// SNR in dB measured over `n` symbols of a unit-power signal sent at `snr_db`.
pub fn empirical_snr_db(snr_db: f64, n: usize, seed: u64) -> f64 {
    use featlink_core::channel::{linear_to_db, power_normalize, AwgnChannel, SnrDb};
    let mut r = rng(seed, "signal");
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let x = power_normalize(&raw, 1.0).expect("nonzero signal");
    let ch = AwgnChannel::new(SnrDb::new(snr_db).expect("finite"), 1.0, seed).expect("valid power");
    let y = ch.transmit(&x);
    let noise: f64 = y.iter().zip(x.symbols()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    linear_to_db(x.average_power() / noise).expect("positive noise")
}

/// One random coding problem: tables plus symbols drawn from the tables' own
/// distribution.
pub struct CoderCase {
    pub tables: featlink_core::digital::CodingTables,
    pub symbols: Vec<i32>,
}

/// Even seeds use a perturbed entropy model (support 255); odd seeds use
/// discretized Gaussians with random support, center and width, including
/// near-deterministic ones.
pub fn coder_case(seed: u64, len: usize) -> CoderCase {
    use featlink_core::digital::{CodingTable, CodingTables};
    let mut r = rng(seed, "coder case");
    let dims = r.random_range(1..=8);
    let tables = if seed.is_multiple_of(2) {
        let base = EntropyModel::new(dims, 255).expect("valid dims");
        let params = base.params().iter().map(|p| p + r.random_range(-1.0..1.0)).collect();
        CodingTables::from_model(&EntropyModel::from_params(dims, 255, params).expect("same layout"))
    } else {
        let support = r.random_range(1..=255);
        let tables = (0..dims)
            .map(|_| {
                let center = r.random_range(-(support as f64)..support as f64) * 0.5;
                let width: f64 = 10f64.powf(r.random_range(-2.0..1.5));
                let pmf: Vec<f64> =
                    (-support..=support).map(|q| (-0.5 * ((q as f64 - center) / width).powi(2)).exp()).collect();
                let total: f64 = pmf.iter().sum();
                CodingTable::from_pmf(&pmf.iter().map(|p| p / total).collect::<Vec<_>>())
            })
            .collect();
        CodingTables::new(tables).expect("nonempty")
    };
    let cdfs: Vec<Vec<f64>> = (0..dims)
        .map(|d| {
            let t = tables.table(d);
            let l = t.support();
            let mut acc = 0.0;
            (-l..=l)
                .map(|q| {
                    acc += t.probability(q).expect("in support");
                    acc
                })
                .collect()
        })
        .collect();
    let symbols = (0..len)
        .map(|i| {
            let cdf = &cdfs[i % dims];
            let u: f64 = r.random_range(0.0..1.0);
            let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            idx as i32 - tables.table(i % dims).support()
        })
        .collect();
    CoderCase { tables, symbols }
}
