use super::{Gradients, LayerGrad, MlpModel, NnError};

/// SGD with heavy-ball momentum and L2 weight decay on weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// L2 coefficient applied to weight matrices (biases are not decayed).
    pub weight_decay: f64,
    /// `(epoch, lr)` pairs: from `epoch` on, the learning rate becomes `lr`.
    pub schedule: Vec<(usize, f64)>,
}

impl SgdConfig {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Self { learning_rate, momentum, weight_decay, schedule: Vec::new() }
    }

    pub fn with_drop(mut self, epoch: usize, learning_rate: f64) -> Self {
        self.schedule.push((epoch, learning_rate));
        self
    }

    pub fn with_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be nonnegative, got {}", self.weight_decay));
        }
        if self.schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return bad("schedule epochs must be strictly increasing".into());
        }
        if self.schedule.iter().any(|&(_, lr)| !(lr > 0.0 && lr.is_finite())) {
            return bad("scheduled learning rates must be positive".into());
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.schedule.iter().take_while(|&&(e, _)| e <= epoch).last().map_or(self.learning_rate, |&(_, lr)| lr)
    }
}

/// Momentum buffers for one model.
#[derive(Debug, Clone)]
pub struct Sgd {
    velocity: Vec<LayerGrad>,
}

impl Sgd {
    pub fn new(model: &MlpModel) -> Self {
        Self { velocity: Gradients::zeros_like(model).layers }
    }

    /// One update at learning rate `lr`:
    /// `v ← μ·v + g + λ·w` (λ on weights only), `w ← w − lr·v`.
    pub fn step(
        &mut self,
        model: &mut MlpModel,
        grads: &Gradients,
        config: &SgdConfig,
        lr: f64,
    ) -> Result<(), NnError> {
        if grads.layers.len() != model.layers().len() || self.velocity.len() != grads.layers.len() {
            return Err(NnError::DimensionMismatch {
                context: "gradient layer count".into(),
                expected: model.layers().len(),
                actual: grads.layers.len(),
            });
        }
        for ((layer, g), v) in model.layers().iter().zip(&grads.layers).zip(&self.velocity) {
            if g.weights.shape() != layer.weights.shape()
                || g.bias.len() != layer.bias.len()
                || v.weights.shape() != layer.weights.shape()
            {
                return Err(NnError::DimensionMismatch {
                    context: "gradient shape".into(),
                    expected: layer.param_count(),
                    actual: g.weights.as_slice().len() + g.bias.len(),
                });
            }
        }
        let mu = config.momentum;
        let decay = config.weight_decay;
        for ((layer, g), v) in model.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.velocity) {
            update(layer.weights.as_mut_slice(), g.weights.as_slice(), v.weights.as_mut_slice(), mu, decay, lr);
            update(&mut layer.bias, &g.bias, &mut v.bias, mu, 0.0, lr);
        }
        Ok(())
    }
}

#[inline]
fn update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], mu: f64, decay: f64, lr: f64) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mu * *v + g + decay * *p;
        *p -= lr * *v;
    }
}

/// Momentum update for a flat parameter vector (used by parameters that do not live
/// in an [`MlpModel`], such as the entropy model).
#[derive(Debug, Clone)]
pub struct FlatSgd {
    velocity: Vec<f64>,
}

impl FlatSgd {
    pub fn new(len: usize) -> Self {
        Self { velocity: vec![0.0; len] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], momentum: f64, decay: f64, lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.velocity.len());
        update(params, grads, &mut self.velocity, momentum, decay, lr);
    }
}

/// Convenience for tests: a gradient set with one scalar per parameter.
pub fn gradients_from_fn(model: &MlpModel, f: impl Fn(f64) -> f64) -> Gradients {
    Gradients {
        layers: model
            .layers()
            .iter()
            .map(|l| LayerGrad { weights: l.weights.map(&f), bias: l.bias.iter().map(|&b| f(b)).collect() })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Matrix};

    fn scalar_model(w: f64, b: f64) -> MlpModel {
        MlpModel::from_layers(vec![DenseLayer {
            weights: Matrix::from_vec(1, 1, vec![w]),
            bias: vec![b],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn weight(m: &MlpModel) -> f64 {
        m.layers()[0].weights[(0, 0)]
    }

    #[test]
    fn plain_step() {
        let mut m = scalar_model(1.0, 0.0);
        let cfg = SgdConfig::new(1.0, 0.0, 0.0);
        let mut opt = Sgd::new(&m);
        let g = gradients_from_fn(&m, |_| 0.5);
        opt.step(&mut m, &g, &cfg, cfg.lr_at(0)).unwrap();
        assert_eq!(weight(&m), 0.5);
    }

    #[test]
    fn momentum_recurrence() {
        let mut m = scalar_model(0.0, 0.0);
        let cfg = SgdConfig::new(0.1, 0.9, 0.0);
        let mut opt = Sgd::new(&m);
        let g = gradients_from_fn(&m, |_| 1.0);
        opt.step(&mut m, &g, &cfg, 0.1).unwrap();
        assert!((weight(&m) + 0.1).abs() < 1e-15);
        opt.step(&mut m, &g, &cfg, 0.1).unwrap();
        assert!((opt.velocity[0].weights[(0, 0)] - 1.9).abs() < 1e-15);
        assert!((weight(&m) + 0.29).abs() < 1e-15);
    }

    #[test]
    fn decay_only_touches_weights() {
        let mut m = scalar_model(1.0, 1.0);
        let cfg = SgdConfig::new(0.01, 0.0, 5e-4);
        let mut opt = Sgd::new(&m);
        let g = gradients_from_fn(&m, |_| 0.0);
        opt.step(&mut m, &g, &cfg, 0.01).unwrap();
        assert!((weight(&m) - 0.999995).abs() < 1e-15);
        assert_eq!(m.layers()[0].bias[0], 1.0);
    }

    #[test]
    fn schedule_lookup_and_validation() {
        let cfg = SgdConfig::new(0.1, 0.9, 5e-4).with_drop(150, 0.01);
        cfg.validate().unwrap();
        assert_eq!(cfg.lr_at(0), 0.1);
        assert_eq!(cfg.lr_at(149), 0.1);
        assert_eq!(cfg.lr_at(150), 0.01);
        assert_eq!(cfg.lr_at(199), 0.01);
        let bad = SgdConfig::new(0.1, 0.9, 0.0).with_drop(5, 0.1).with_drop(5, 0.01);
        assert!(bad.validate().is_err());
        assert!(SgdConfig::new(0.1, 1.0, 0.0).validate().is_err());
        assert!(SgdConfig::new(-0.1, 0.5, 0.0).validate().is_err());
    }
}
