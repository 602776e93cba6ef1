//! Core data model: embedding matrices, utterance identities, and pseudo-labels.
//!
//! An [`EmbeddingMatrix`] holds the vectors one extractor produced for every
//! utterance. The clustering pipeline works on several of these at once (one
//! per model), all covering the same M utterances in the same row order.
//! Rows are compared by cosine similarity, so every matrix is length-normalized
//! with [`normalize_rows`] before any similarity is computed.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    /// A row's Euclidean norm is below 1e-12, so it has no direction.
    #[error("row {0} has (near-)zero norm and cannot be normalized")]
    ZeroVectorRow(usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("bad shape: {0}")]
    BadShape(String),
}

/// Dense row-major matrix of utterance embeddings from a single extractor.
///
/// Row `i` is the embedding of utterance `i`. Values are stored as `f64`
/// internally; the on-disk format is 32-bit (see the `io` module), and the
/// widening conversion on load is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    model_id: usize,
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Wraps raw row-major data. Fails on non-finite entries, fewer than one
    /// row, dimension below 2, or mismatched buffer length.
    pub fn new(model_id: usize, dim: usize, data: Vec<f64>) -> Result<Self, EmbeddingError> {
        if dim < 2 {
            return Err(EmbeddingError::BadShape(format!("dim {dim} < 2")));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(EmbeddingError::BadShape(format!(
                "data length {} is not a positive multiple of dim {dim}",
                data.len()
            )));
        }
        let rows = data.len() / dim;
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(EmbeddingError::NonFinite {
                    row: idx / dim,
                    col: idx % dim,
                });
            }
        }
        Ok(Self {
            model_id,
            rows,
            dim,
            data,
        })
    }

    pub fn model_id(&self) -> usize {
        self.model_id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Cosine similarity of rows `i` and `j`, assuming unit-norm rows.
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        dot(self.row(i), self.row(j))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Scales every row to unit Euclidean length, preserving direction.
///
/// Idempotent: applying it twice changes nothing beyond 1e-12 per entry.
pub fn normalize_rows(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut data = m.data.clone();
    for i in 0..m.rows {
        let row = &mut data[i * m.dim..(i + 1) * m.dim];
        let norm = dot(row, row).sqrt();
        if norm < 1e-12 {
            return Err(EmbeddingError::ZeroVectorRow(i));
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    Ok(EmbeddingMatrix {
        model_id: m.model_id,
        rows: m.rows,
        dim: m.dim,
        data,
    })
}

/// The utterance identities behind the matrix rows, plus the active mask.
///
/// `active[i] == false` means utterance `i` was removed by the outlier filter
/// and takes no further part in neighbor search or labeling.
#[derive(Debug, Clone)]
pub struct UtteranceSet {
    ids: Vec<String>,
    active: Vec<bool>,
}

impl UtteranceSet {
    /// Builds a set from unique, non-empty identifiers; all start active.
    pub fn new(ids: Vec<String>) -> Result<Self, EmbeddingError> {
        let mut seen = std::collections::HashSet::new();
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(EmbeddingError::BadShape(format!("empty id at index {i}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(EmbeddingError::BadShape(format!("duplicate id {id:?}")));
            }
        }
        let active = vec![true; ids.len()];
        Ok(Self { ids, active })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn deactivate(&mut self, i: usize) {
        self.active[i] = false;
    }
}

/// Per-utterance integer class assignments. `-1` marks an utterance that is
/// unlabeled, either removed by preprocessing or never placed in the graph.
/// Labels of placed utterances are dense: `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels {
    labels: Vec<i64>,
    num_classes: usize,
}

impl PseudoLabels {
    pub fn new(labels: Vec<i64>) -> Result<Self, EmbeddingError> {
        let mut seen = std::collections::BTreeSet::new();
        for &l in &labels {
            if l < -1 {
                return Err(EmbeddingError::BadShape(format!("label {l} below -1")));
            }
            if l >= 0 {
                seen.insert(l);
            }
        }
        let num_classes = seen.len();
        // dense check: labeled values must be exactly 0..num_classes
        if let Some(&max) = seen.iter().next_back() {
            if max as usize + 1 != num_classes {
                return Err(EmbeddingError::BadShape(format!(
                    "labels not dense: {num_classes} classes but max label {max}"
                )));
            }
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn unlabeled(n: usize) -> Self {
        Self {
            labels: vec![-1; n],
            num_classes: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> i64 {
        self.labels[i]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Fraction of utterances carrying a non-negative label.
    pub fn coverage(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        let placed = self.labels.iter().filter(|&&l| l >= 0).count();
        placed as f64 / self.labels.len() as f64
    }
}
