use super::{ExtractorKind, JsccConfig, JsccError, JsccModel, StageSchedule, Variant};
use crate::channel::{normalize_rows, normalize_rows_backward, AwgnChannel};
use crate::data::LabeledSet;
use crate::nn::{backward, cross_entropy, forward, l1_loss, Activation, DenseLayer, Matrix, MlpModel, Sgd};
use crate::seed;
use crate::train::{check_loss, shuffled_batches, Stage, TrainingLog};

#[derive(Debug, Clone)]
pub struct JsccTraining {
    pub model: JsccModel,
    pub log: TrainingLog,
}

pub fn train_jscc(train: &LabeledSet, config: &JsccConfig) -> Result<JsccTraining, JsccError> {
    match config.variant {
        Variant::Ae => train_jscc_ae(train, config),
        Variant::Fc => train_jscc_fc(train, config),
    }
}

fn check_inputs(train: &LabeledSet, config: &JsccConfig, variant: Variant) -> Result<(), JsccError> {
    config.validate()?;
    if config.variant != variant {
        return Err(JsccError::Usage(format!("config is for the {} variant, not {variant}", config.variant)));
    }
    if train.features.cols() != config.feature_dim {
        return Err(JsccError::InvalidConfig(format!(
            "feature_dim {} does not match dataset dim {}",
            config.feature_dim,
            train.features.cols()
        )));
    }
    if train.features.rows() == 0 || train.labels.len() != train.features.rows() {
        return Err(JsccError::Usage("training set needs one label per row".into()));
    }
    Ok(())
}

fn extractor(kind: ExtractorKind, d: usize) -> MlpModel {
    match kind {
        ExtractorKind::PassThrough => MlpModel::identity(),
        ExtractorKind::Linear => {
            MlpModel::from_layers(vec![DenseLayer::identity(d, Activation::Identity)]).expect("square identity layer")
        }
    }
}

/// `dims[0] → … → dims[last]` with `hidden` activations and a linear output layer.
fn stack(dims: &[usize], hidden: Activation, rng: &mut impl rand::Rng) -> Result<MlpModel, JsccError> {
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == dims.len() { Activation::Identity } else { hidden };
            DenseLayer::he_uniform(w[0], w[1], act, rng)
        })
        .collect();
    Ok(MlpModel::from_layers(layers)?)
}

fn channel(config: &JsccConfig, stage: Stage) -> Result<AwgnChannel, JsccError> {
    Ok(AwgnChannel::new(
        config.train_snr,
        config.power,
        seed::derive(config.seed, &[seed::tag("train channel"), seed::tag(stage.name())]),
    )?)
}

/// Power-normalizes each row and adds channel noise. Returns the received batch and
/// what the backward pass needs.
fn through_channel(z: &Matrix, ch: &AwgnChannel, stream: u64) -> Result<(Matrix, Matrix, Vec<f64>), JsccError> {
    let (x, scales) = normalize_rows(z, ch.power())?;
    let mut y = x.clone();
    ch.add_noise(y.as_mut_slice(), stream);
    Ok((y, x, scales))
}

struct StageRun<'a> {
    stage: Stage,
    schedule: &'a StageSchedule,
    log: &'a mut TrainingLog,
}

impl StageRun<'_> {
    /// Runs the epoch loop; `step(batch, lr)` trains on one batch and returns its mean loss.
    fn run(
        self,
        n: usize,
        batch_size: usize,
        shuffle: &mut impl rand::Rng,
        mut step: impl FnMut(&[usize], f64) -> Result<f64, JsccError>,
    ) -> Result<(), JsccError> {
        for epoch in 0..self.schedule.epochs {
            let lr = self.schedule.sgd.lr_at(epoch);
            let (mut sum, mut rows) = (0.0, 0usize);
            for batch in shuffled_batches(n, batch_size, shuffle) {
                sum += step(&batch, lr)? * batch.len() as f64;
                rows += batch.len();
            }
            let loss = sum / rows as f64;
            check_loss(loss, self.stage, epoch)?;
            self.log.push(self.stage, epoch, lr, loss);
        }
        Ok(())
    }
}

/// Three-stage training:
/// 1. extractor + classifier head with cross-entropy;
/// 2. extractor frozen, encoder/decoder trained through the channel to reconstruct
///    the clean extracted features under L1;
/// 3. every part fine-tuned jointly with cross-entropy through the channel, reusing
///    the stage-1 head on the decoder output.
pub fn train_jscc_ae(train: &LabeledSet, config: &JsccConfig) -> Result<JsccTraining, JsccError> {
    check_inputs(train, config, Variant::Ae)?;
    let d = config.feature_dim;
    let n = train.features.rows();
    let mut init = seed::rng(config.seed, &[seed::tag("jscc init")]);
    let mut enc_dims = vec![d];
    enc_dims.extend(&config.encoder_hidden);
    enc_dims.push(config.bandwidth);
    let dec_dims: Vec<usize> = enc_dims.iter().rev().copied().collect();

    let mut ext = extractor(config.extractor, d);
    let mut head = stack(&[d, train.num_classes], Activation::Identity, &mut init)?;
    let mut enc = stack(&enc_dims, config.hidden_activation, &mut init)?;
    let mut dec = stack(&dec_dims, config.hidden_activation, &mut init)?;
    let mut shuffle = seed::rng(config.seed, &[seed::tag("jscc shuffle")]);
    let mut log = TrainingLog::default();
    let x_all = &train.features;

    // stage 1
    {
        let sgd = &config.pretrain.sgd;
        let (mut o_ext, mut o_head) = (Sgd::new(&ext), Sgd::new(&head));
        StageRun { stage: Stage::Pretrain, schedule: &config.pretrain, log: &mut log }.run(
            n,
            config.batch_size,
            &mut shuffle,
            |batch, lr| {
                let x = x_all.select_rows(batch);
                let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
                let (f, c_ext) = forward(&ext, &x)?;
                let (logits, c_head) = forward(&head, &f)?;
                let (loss, g) = cross_entropy(&logits, &labels)?;
                let b_head = backward(&head, &c_head, &g)?;
                let b_ext = backward(&ext, &c_ext, &b_head.input_grad)?;
                o_head.step(&mut head, &b_head.grads, sgd, lr)?;
                o_ext.step(&mut ext, &b_ext.grads, sgd, lr)?;
                Ok(loss)
            },
        )?;
    }

    // stage 2
    {
        let features = ext.predict(x_all)?;
        let sgd = &config.reconstruct.sgd;
        let ch = channel(config, Stage::Reconstruct)?;
        let (mut o_enc, mut o_dec) = (Sgd::new(&enc), Sgd::new(&dec));
        let mut stream = 0u64;
        StageRun { stage: Stage::Reconstruct, schedule: &config.reconstruct, log: &mut log }.run(
            n,
            config.batch_size,
            &mut shuffle,
            |batch, lr| {
                let f = features.select_rows(batch);
                let (z, c_enc) = forward(&enc, &f)?;
                let (y, x, scales) = through_channel(&z, &ch, stream)?;
                stream += 1;
                let (r, c_dec) = forward(&dec, &y)?;
                let (loss, g) = l1_loss(&r, &f)?;
                let b_dec = backward(&dec, &c_dec, &g)?;
                // additive noise has an identity Jacobian
                let g_z = normalize_rows_backward(&b_dec.input_grad, &x, &scales, config.norm_gradient);
                let b_enc = backward(&enc, &c_enc, &g_z)?;
                o_dec.step(&mut dec, &b_dec.grads, sgd, lr)?;
                o_enc.step(&mut enc, &b_enc.grads, sgd, lr)?;
                Ok(loss)
            },
        )?;
    }

    // stage 3
    {
        let sgd = &config.finetune.sgd;
        let ch = channel(config, Stage::FineTune)?;
        let mut opts = [Sgd::new(&ext), Sgd::new(&enc), Sgd::new(&dec), Sgd::new(&head)];
        let mut stream = 0u64;
        StageRun { stage: Stage::FineTune, schedule: &config.finetune, log: &mut log }.run(
            n,
            config.batch_size,
            &mut shuffle,
            |batch, lr| {
                let x = x_all.select_rows(batch);
                let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
                let (f, c_ext) = forward(&ext, &x)?;
                let (z, c_enc) = forward(&enc, &f)?;
                let (y, xn, scales) = through_channel(&z, &ch, stream)?;
                stream += 1;
                let (r, c_dec) = forward(&dec, &y)?;
                let (logits, c_head) = forward(&head, &r)?;
                let (loss, g) = cross_entropy(&logits, &labels)?;
                let b_head = backward(&head, &c_head, &g)?;
                let b_dec = backward(&dec, &c_dec, &b_head.input_grad)?;
                let g_z = normalize_rows_backward(&b_dec.input_grad, &xn, &scales, config.norm_gradient);
                let b_enc = backward(&enc, &c_enc, &g_z)?;
                let b_ext = backward(&ext, &c_ext, &b_enc.input_grad)?;
                let [o_ext, o_enc, o_dec, o_head] = &mut opts;
                o_head.step(&mut head, &b_head.grads, sgd, lr)?;
                o_dec.step(&mut dec, &b_dec.grads, sgd, lr)?;
                o_enc.step(&mut enc, &b_enc.grads, sgd, lr)?;
                o_ext.step(&mut ext, &b_ext.grads, sgd, lr)?;
                Ok(loss)
            },
        )?;
    }

    Ok(JsccTraining {
        model: JsccModel {
            variant: Variant::Ae,
            train_snr: config.train_snr,
            power: config.power,
            extractor: ext,
            encoder: enc,
            decoder: dec,
            head,
        },
        log,
    })
}

/// Single-stage end-to-end cross-entropy training of extractor, linear encoder and
/// a head on the received symbols.
pub fn train_jscc_fc(train: &LabeledSet, config: &JsccConfig) -> Result<JsccTraining, JsccError> {
    check_inputs(train, config, Variant::Fc)?;
    let d = config.feature_dim;
    let n = train.features.rows();
    let mut init = seed::rng(config.seed, &[seed::tag("jscc init")]);
    let mut ext = extractor(config.extractor, d);
    let mut enc = stack(&[d, config.bandwidth], Activation::Identity, &mut init)?;
    let mut head = stack(&[config.bandwidth, train.num_classes], Activation::Identity, &mut init)?;
    let mut shuffle = seed::rng(config.seed, &[seed::tag("jscc shuffle")]);
    let mut log = TrainingLog::default();
    let sgd = &config.end_to_end.sgd;
    let ch = channel(config, Stage::EndToEnd)?;
    let mut opts = [Sgd::new(&ext), Sgd::new(&enc), Sgd::new(&head)];
    let mut stream = 0u64;
    StageRun { stage: Stage::EndToEnd, schedule: &config.end_to_end, log: &mut log }.run(
        n,
        config.batch_size,
        &mut shuffle,
        |batch, lr| {
            let x = train.features.select_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let (f, c_ext) = forward(&ext, &x)?;
            let (z, c_enc) = forward(&enc, &f)?;
            let (y, xn, scales) = through_channel(&z, &ch, stream)?;
            stream += 1;
            let (logits, c_head) = forward(&head, &y)?;
            let (loss, g) = cross_entropy(&logits, &labels)?;
            let b_head = backward(&head, &c_head, &g)?;
            let g_z = normalize_rows_backward(&b_head.input_grad, &xn, &scales, config.norm_gradient);
            let b_enc = backward(&enc, &c_enc, &g_z)?;
            let b_ext = backward(&ext, &c_ext, &b_enc.input_grad)?;
            let [o_ext, o_enc, o_head] = &mut opts;
            o_head.step(&mut head, &b_head.grads, sgd, lr)?;
            o_enc.step(&mut enc, &b_enc.grads, sgd, lr)?;
            o_ext.step(&mut ext, &b_ext.grads, sgd, lr)?;
            Ok(loss)
        },
    )?;
    Ok(JsccTraining {
        model: JsccModel {
            variant: Variant::Fc,
            train_snr: config.train_snr,
            power: config.power,
            extractor: ext,
            encoder: enc,
            decoder: MlpModel::identity(),
            head,
        },
        log,
    })
}
