use rand_distr::{Distribution, StandardNormal};

use super::{DataError, FeatureDataset, Split};
use crate::nn::Matrix;
use crate::seed;

/// Gaussian identity clusters standing in for extracted person features.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_identities: usize,
    pub samples_per_identity: usize,
    pub feature_dim: usize,
    /// Identity centers are drawn from `N(0, scale²·I)`.
    pub cluster_center_scale: f64,
    /// Samples are drawn from `N(center, sigma²·I)`.
    pub within_class_sigma: f64,
    pub seed: u64,
    /// Fraction of identities used for training (the rest are evaluation identities).
    pub train_fraction: f64,
    /// Samples per evaluation identity placed in the query split.
    pub queries_per_identity: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_identities: 50,
            samples_per_identity: 20,
            feature_dim: 64,
            cluster_center_scale: 1.0,
            within_class_sigma: 0.25,
            seed: 0,
            train_fraction: 0.6,
            queries_per_identity: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn train_identities(&self) -> usize {
        ((self.num_identities as f64 * self.train_fraction).round() as usize)
            .clamp(1, self.num_identities.saturating_sub(1).max(1))
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut errs = Vec::new();
        if self.num_identities < 2 {
            errs.push(format!("num_identities must be >= 2, got {}", self.num_identities));
        }
        if self.samples_per_identity < 2 {
            errs.push(format!("samples_per_identity must be >= 2, got {}", self.samples_per_identity));
        }
        if self.feature_dim == 0 {
            errs.push("feature_dim must be positive".into());
        }
        if !(self.cluster_center_scale > 0.0 && self.cluster_center_scale.is_finite()) {
            errs.push(format!("cluster_center_scale must be positive, got {}", self.cluster_center_scale));
        }
        if !(self.within_class_sigma >= 0.0 && self.within_class_sigma.is_finite()) {
            errs.push(format!("within_class_sigma must be nonnegative, got {}", self.within_class_sigma));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            errs.push(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if self.queries_per_identity == 0 || self.queries_per_identity >= self.samples_per_identity {
            errs.push(format!(
                "queries_per_identity must be in [1, samples_per_identity), got {}",
                self.queries_per_identity
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(DataError::InvalidSpec(errs.join("; ")))
        }
    }
}

/// Draws the dataset. Identities `0..T` are training identities, the rest are split
/// into query (first `queries_per_identity` samples) and gallery rows.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FeatureDataset, DataError> {
    spec.validate()?;
    let d = spec.feature_dim;
    let n = spec.num_identities * spec.samples_per_identity;
    let n_train = spec.train_identities();
    let mut rng = seed::rng(spec.seed, &[seed::tag("synthetic")]);
    let mut data = Vec::with_capacity(n * d);
    let mut ids = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    let mut center = vec![0.0; d];
    for id in 0..spec.num_identities {
        for c in center.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c = spec.cluster_center_scale * z;
        }
        for s in 0..spec.samples_per_identity {
            for &c in &center {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(c + spec.within_class_sigma * z);
            }
            ids.push(id as u32);
            splits.push(if id < n_train {
                Split::Train
            } else if s < spec.queries_per_identity {
                Split::Query
            } else {
                Split::Gallery
            });
        }
    }
    FeatureDataset::new(Matrix::from_vec(n, d, data), ids, splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_sizes() {
        let ds = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.indices(Split::Train).len(), 600);
        assert_eq!(ds.indices(Split::Query).len(), 20);
        assert_eq!(ds.indices(Split::Gallery).len(), 380);
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let b = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticSpec::default().with_seed(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs_list_every_problem() {
        let spec = SyntheticSpec { num_identities: 1, samples_per_identity: 1, ..SyntheticSpec::default() };
        let msg = generate_synthetic(&spec).unwrap_err().to_string();
        assert!(msg.contains("num_identities") && msg.contains("samples_per_identity"));
    }
}
