//! Multi-layer perceptron: forward pass with cached activations, and the matching
//! backward pass producing per-parameter gradients plus the gradient with respect
//! to the network input (needed to chain networks through the channel).

use rand::Rng;

use super::{Activation, DenseLayer, Matrix, NnError};

/// An ordered stack of dense layers. A model with no layers is the identity map.
#[derive(Debug, Clone)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    // Bumped on every parameter update so stale forward caches are detectable.
    revision: u64,
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl MlpModel {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::DimensionMismatch {
                    context: format!("layer {} output feeds layer {}", i, i + 1),
                    expected: pair[1].in_dim(),
                    actual: pair[0].out_dim(),
                });
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(NnError::DimensionMismatch {
                    context: format!("layer {i} bias"),
                    expected: l.out_dim(),
                    actual: l.bias.len(),
                });
            }
            if !l.is_finite() {
                return Err(NnError::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(Self { layers, revision: 0 })
    }

    /// The identity map (no layers).
    pub fn identity() -> Self {
        Self { layers: Vec::new(), revision: 0 }
    }

    /// He-initialized stack over `dims` (`dims[0]` is the input width). Hidden layers use
    /// `hidden`, the final layer uses `output`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if dims.contains(&0) {
            return Err(NnError::InvalidConfig(format!("layer widths must be positive, got {dims:?}")));
        }
        let n = dims.len().saturating_sub(1);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::he_uniform(w[0], w[1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access for tests and hand-built models. Counts as a parameter update.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.revision += 1;
        &mut self.layers
    }

    pub fn is_identity(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.layers.first().map(DenseLayer::in_dim)
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.layers.last().map(DenseLayer::out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }

    /// Inference-only forward pass.
    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix, NnError> {
        self.check_input(inputs)?;
        let mut x = inputs.clone();
        for layer in &self.layers {
            let mut z = x.matmul_transpose(&layer.weights);
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            x = z;
        }
        Ok(x)
    }

    /// Single-vector convenience wrapper around [`MlpModel::predict`].
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.predict(&Matrix::from_vec(1, input.len(), input.to_vec()))?.into_vec())
    }

    fn check_input(&self, inputs: &Matrix) -> Result<(), NnError> {
        match self.in_dim() {
            Some(d) if d != inputs.cols() => Err(NnError::DimensionMismatch {
                context: "model input columns".into(),
                expected: d,
                actual: inputs.cols(),
            }),
            _ => Ok(()),
        }
    }
}

/// Activations recorded by [`forward`] for use by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    // inputs[i] feeds layer i; pre[i] is layer i's pre-activation.
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    revision: u64,
    shapes: Vec<(usize, usize)>,
    batch_cols: usize,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

/// Gradient of a scalar loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer gradients, same shapes as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad { weights: Matrix::zeros(l.out_dim(), l.in_dim()), bias: vec![0.0; l.out_dim()] })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| g.weights.is_finite() && g.bias.iter().all(|b| b.is_finite()))
    }

    /// Visits every scalar gradient in the same order as the model's parameters.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|g| g.weights.as_slice().iter().chain(&g.bias).copied())
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    /// Gradient with respect to the inputs passed to [`forward`].
    pub input_grad: Matrix,
}

/// Runs the model on a batch, returning the outputs and a cache for [`backward`].
pub fn forward(model: &MlpModel, inputs: &Matrix) -> Result<(Matrix, ForwardCache), NnError> {
    model.check_input(inputs)?;
    if !inputs.is_finite() {
        return Err(NnError::NonFinite("forward inputs".into()));
    }
    let mut layer_inputs = Vec::with_capacity(model.layers.len());
    let mut pre = Vec::with_capacity(model.layers.len());
    let mut x = inputs.clone();
    for layer in &model.layers {
        let mut z = x.matmul_transpose(&layer.weights);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        let a = z.map(|v| layer.activation.apply(v));
        layer_inputs.push(std::mem::replace(&mut x, a));
        pre.push(z);
    }
    if layer_inputs.is_empty() {
        layer_inputs.push(inputs.clone());
    }
    let cache = ForwardCache {
        inputs: layer_inputs,
        pre,
        revision: model.revision,
        shapes: model.layers.iter().map(|l| l.weights.shape()).collect(),
        batch_cols: inputs.cols(),
    };
    Ok((x, cache))
}

/// Backpropagates `output_grad` (dL/d outputs) through the model.
pub fn backward(model: &MlpModel, cache: &ForwardCache, output_grad: &Matrix) -> Result<Backward, NnError> {
    let shapes: Vec<_> = model.layers.iter().map(|l| l.weights.shape()).collect();
    if cache.revision != model.revision || cache.shapes != shapes {
        return Err(NnError::StaleCache);
    }
    let n = cache.batch_size();
    let out_cols = model.out_dim().unwrap_or(cache.batch_cols);
    if output_grad.shape() != (n, out_cols) {
        return Err(NnError::DimensionMismatch {
            context: "output gradient shape".into(),
            expected: n * out_cols,
            actual: output_grad.rows() * output_grad.cols(),
        });
    }

    let mut grads = Vec::with_capacity(model.layers.len());
    let mut g = output_grad.clone();
    for (i, layer) in model.layers.iter().enumerate().rev() {
        // dL/dz = dL/da ⊙ act'(z)
        let z = &cache.pre[i];
        for (gv, &zv) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *gv *= layer.activation.derivative(zv);
        }
        let weights = g.transpose_matmul(&cache.inputs[i]);
        let mut bias = vec![0.0; layer.out_dim()];
        for row in g.row_iter() {
            for (b, v) in bias.iter_mut().zip(row) {
                *b += v;
            }
        }
        let next = g.matmul(&layer.weights);
        grads.push(LayerGrad { weights, bias });
        g = next;
    }
    grads.reverse();
    Ok(Backward { grads: Gradients { layers: grads }, input_grad: g })
}
