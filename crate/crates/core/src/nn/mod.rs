//! Minimal dense-network training engine: forward/backward for fixed MLP stacks,
//! softmax cross-entropy and L1 losses, SGD with momentum and L2 weight decay.
//!
//! All math is `f64`. Training code owns the loop; this module supplies the
//! differentiable pieces so networks can be chained through non-network stages
//! (power normalization, the channel, quantization noise).

mod checkpoint;
mod layer;
mod loss;
mod matrix;
mod mlp;
mod optim;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, MAGIC as CHECKPOINT_MAGIC,
};
pub use layer::{Activation, DenseLayer, LEAKY_SLOPE};
pub use loss::{argmax_rows, cross_entropy, l1_loss};
pub use matrix::{dot, Matrix};
pub use mlp::{backward, forward, Backward, ForwardCache, Gradients, LayerGrad, MlpModel};
pub use optim::{gradients_from_fn, FlatSgd, Sgd, SgdConfig};

use crate::bytes::FormatError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch { context: String, expected: usize, actual: usize },
    #[error("forward cache does not match the model (parameters changed or different model)")]
    StaleCache,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint format: {0}")]
    Format(#[from] FormatError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// A training batch: inputs plus either class labels or regression targets.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Targets,
}

#[derive(Debug, Clone)]
pub enum Targets {
    Labels(Vec<usize>),
    Values(Matrix),
}

impl Batch {
    pub fn labeled(inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self, NnError> {
        if inputs.rows() == 0 || labels.len() != inputs.rows() {
            return Err(NnError::DimensionMismatch {
                context: "batch labels".into(),
                expected: inputs.rows().max(1),
                actual: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(NnError::InvalidLabel { label, classes: num_classes });
        }
        Ok(Self { inputs, targets: Targets::Labels(labels) })
    }

    pub fn regression(inputs: Matrix, targets: Matrix) -> Result<Self, NnError> {
        if inputs.rows() == 0 || targets.rows() != inputs.rows() {
            return Err(NnError::DimensionMismatch {
                context: "batch targets".into(),
                expected: inputs.rows().max(1),
                actual: targets.rows(),
            });
        }
        Ok(Self { inputs, targets: Targets::Values(targets) })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}
