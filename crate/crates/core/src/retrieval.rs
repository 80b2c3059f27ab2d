//! Exhaustive nearest-neighbour ranking against a labeled gallery and top-k accuracy.

use std::collections::HashSet;

use crate::nn::{dot, Matrix};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RetrievalError {
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("query has {actual} dims, gallery has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("NaN in {0}")]
    NaN(&'static str),
    #[error("gallery has {rows} rows but {ids} identity ids")]
    IdCountMismatch { rows: usize, ids: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 − cos(q, g)`; a zero vector is treated as orthogonal to everything.
    Cosine,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euclidean" => Some(Metric::Euclidean),
            "cosine" => Some(Metric::Cosine),
            _ => None,
        }
    }
}

/// Candidate features stored at the receiver, one identity id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    features: Matrix,
    ids: Vec<u32>,
    norms: Vec<f64>,
}

impl Gallery {
    pub fn new(features: Matrix, ids: Vec<u32>) -> Result<Self, RetrievalError> {
        if features.rows() == 0 {
            return Err(RetrievalError::EmptyGallery);
        }
        if ids.len() != features.rows() {
            return Err(RetrievalError::IdCountMismatch { rows: features.rows(), ids: ids.len() });
        }
        if features.as_slice().iter().any(|v| v.is_nan()) {
            return Err(RetrievalError::NaN("gallery features"));
        }
        let norms = features.row_iter().map(|r| dot(r, r).sqrt()).collect();
        Ok(Self { features, ids, norms })
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

    pub fn identity_count(&self) -> usize {
        self.ids.iter().collect::<HashSet<_>>().len()
    }

    fn distances(&self, query: &[f64], metric: Metric) -> Result<Vec<f64>, RetrievalError> {
        if query.len() != self.dim() {
            return Err(RetrievalError::DimensionMismatch { expected: self.dim(), actual: query.len() });
        }
        if query.iter().any(|v| v.is_nan()) {
            return Err(RetrievalError::NaN("query"));
        }
        Ok(match metric {
            Metric::Euclidean => self
                .features
                .row_iter()
                .map(|g| g.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect(),
            Metric::Cosine => {
                let qn = dot(query, query).sqrt();
                self.features
                    .row_iter()
                    .zip(&self.norms)
                    .map(|(g, &gn)| if qn == 0.0 || gn == 0.0 { 1.0 } else { 1.0 - dot(g, query) / (qn * gn) })
                    .collect()
            }
        })
    }

    /// Index of the closest gallery row (lowest index on ties).
    pub fn nearest(&self, query: &[f64], metric: Metric) -> Result<usize, RetrievalError> {
        let d = self.distances(query, metric)?;
        Ok(d.iter().enumerate().fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best }).0)
    }
}

/// Gallery indices sorted by ascending distance, ties broken by ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub order: Vec<usize>,
    pub distances: Vec<f64>,
}

pub fn rank_gallery(query: &[f64], gallery: &Gallery, metric: Metric) -> Result<RankedResult, RetrievalError> {
    let d = gallery.distances(query, metric)?;
    let mut order: Vec<usize> = (0..d.len()).collect();
    // stable sort keeps index order among equal distances
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let distances = order.iter().map(|&i| d[i]).collect();
    Ok(RankedResult { order, distances })
}

/// Fraction of queries whose `k` nearest gallery rows include their identity.
pub fn top_k_accuracy(
    queries: &Matrix,
    query_ids: &[u32],
    gallery: &Gallery,
    k: usize,
    metric: Metric,
) -> Result<f64, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if queries.rows() != query_ids.len() {
        return Err(RetrievalError::IdCountMismatch { rows: queries.rows(), ids: query_ids.len() });
    }
    if queries.rows() == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (q, &id) in queries.row_iter().zip(query_ids) {
        let hit = if k == 1 {
            gallery.ids[gallery.nearest(q, metric)?] == id
        } else {
            let ranked = rank_gallery(q, gallery, metric)?;
            ranked.order.iter().take(k).any(|&i| gallery.ids[i] == id)
        };
        hits += hit as usize;
    }
    Ok(hits as f64 / queries.rows() as f64)
}
