//! Labeled feature datasets: the synthetic stand-in for extracted re-ID features,
//! train/query/gallery splits, and the `FLFV` interchange file.

mod file;
mod synthetic;

pub use file::{decode_feature_file, encode_feature_file, read_feature_file, write_feature_file};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::bytes::FormatError;
use crate::nn::Matrix;
use crate::retrieval::{Gallery, RetrievalError};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("split invariant violated: {0}")]
    SplitViolation(String),
    #[error("feature file: {0}")]
    Format(#[from] FormatError),
    #[error("feature file io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Query => 1,
            Split::Gallery => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Split::Train),
            1 => Some(Split::Query),
            2 => Some(Split::Gallery),
            _ => None,
        }
    }
}

/// Features `[N × d]` with one identity and one split tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Matrix,
    ids: Vec<u32>,
    splits: Vec<Split>,
}

/// Training rows with identities remapped to dense class indices `0..num_classes`.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl FeatureDataset {
    /// Builds a dataset and checks the split invariants.
    pub fn new(features: Matrix, ids: Vec<u32>, splits: Vec<Split>) -> Result<Self, DataError> {
        let ds = Self { features, ids, splits };
        ds.validate()?;
        Ok(ds)
    }

    /// Every query identity appears in the gallery; train identities are disjoint from
    /// query and gallery identities.
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.features.rows();
        if self.ids.len() != n || self.splits.len() != n {
            return Err(DataError::SplitViolation(format!(
                "{n} rows but {} ids and {} split tags",
                self.ids.len(),
                self.splits.len()
            )));
        }
        if !self.features.is_finite() {
            return Err(DataError::SplitViolation("non-finite features".into()));
        }
        let ids_of = |s: Split| -> BTreeSet<u32> {
            self.ids.iter().zip(&self.splits).filter(|(_, &t)| t == s).map(|(&i, _)| i).collect()
        };
        let train = ids_of(Split::Train);
        let query = ids_of(Split::Query);
        let gallery = ids_of(Split::Gallery);
        if let Some(q) = query.difference(&gallery).next() {
            return Err(DataError::SplitViolation(format!("query identity {q} has no gallery entry")));
        }
        if let Some(t) = train.intersection(&query.union(&gallery).copied().collect()).next() {
            return Err(DataError::SplitViolation(format!("identity {t} appears in both train and evaluation splits")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Features and identity ids of one split, in row order.
    pub fn subset(&self, split: Split) -> (Matrix, Vec<u32>) {
        let idx = self.indices(split);
        let ids = idx.iter().map(|&i| self.ids[i]).collect();
        (self.features.select_rows(&idx), ids)
    }

    pub fn train_set(&self) -> Result<LabeledSet, DataError> {
        let (features, ids) = self.subset(Split::Train);
        let classes: BTreeMap<u32, usize> =
            ids.iter().copied().collect::<BTreeSet<_>>().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        if classes.len() < 2 {
            return Err(DataError::SplitViolation(format!(
                "training needs at least 2 labeled identities, found {}",
                classes.len()
            )));
        }
        let labels = ids.iter().map(|id| classes[id]).collect();
        Ok(LabeledSet { features, labels, num_classes: classes.len() })
    }

    pub fn queries(&self) -> (Matrix, Vec<u32>) {
        self.subset(Split::Query)
    }

    pub fn gallery(&self) -> Result<Gallery, DataError> {
        let (f, ids) = self.subset(Split::Gallery);
        Ok(Gallery::new(f, ids)?)
    }

    /// SHA-256 of the dataset's feature-file encoding, hex.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(encode_feature_file(self)))
    }

    /// Same dataset with features rounded through `f32`, as stored on disk.
    pub fn as_stored(&self) -> Self {
        Self { features: self.features.map(|v| v as f32 as f64), ids: self.ids.clone(), splits: self.splits.clone() }
    }
}
