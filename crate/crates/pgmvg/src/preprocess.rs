//! Preparation before any graph is built: recenter embeddings to cancel the
//! domain offset, and drop pathological utterances that are "near everything".
//!
//! The outlier rule: look at how similar an utterance is to its rank-th most
//! similar peer. A genuine speaker has a bounded clique; a row that is still
//! extremely similar to its 500th neighbor is junk (music, noise, duplicated
//! audio) and would glue unrelated clusters together.

use crate::embedding::{normalize_rows, EmbeddingError, EmbeddingMatrix};
use crate::knn::NeighborTable;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("need at least 2 rows to recenter, have {0}")]
    TooFewRows(usize),
    #[error("row {0} coincides with the center; cannot renormalize")]
    DegenerateCenter(usize),
}

/// Subtracts the mean row and renormalizes. Removes the dominant shared
/// direction so neighbor ranking reflects speaker structure, not the domain.
pub fn statistic_adapt(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix, PreprocessError> {
    if m.rows() < 2 {
        return Err(PreprocessError::TooFewRows(m.rows()));
    }
    let mut center = vec![0.0f64; m.dim()];
    for i in 0..m.rows() {
        for (c, v) in center.iter_mut().zip(m.row(i)) {
            *c += v;
        }
    }
    for c in center.iter_mut() {
        *c /= m.rows() as f64;
    }
    let mut data = Vec::with_capacity(m.rows() * m.dim());
    for i in 0..m.rows() {
        for (v, c) in m.row(i).iter().zip(center.iter()) {
            data.push(v - c);
        }
    }
    let centered =
        EmbeddingMatrix::new(m.model_id(), m.dim(), data).expect("finite in, finite out");
    normalize_rows(&centered).map_err(|e| match e {
        EmbeddingError::ZeroVectorRow(i) => PreprocessError::DegenerateCenter(i),
        other => unreachable!("unexpected normalize failure: {other}"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalReason {
    HighDegree,
}

/// Which utterances the filter flagged, per model and as a combined union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovalReport {
    /// Union over models, deduplicated and sorted ascending.
    pub removed: Vec<usize>,
    /// How many rows each model flagged before the union.
    pub per_model_counts: Vec<usize>,
    pub reason: RemovalReason,
}

impl RemovalReport {
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }
}

/// Flags row `i` when its similarity to its rank-th neighbor exceeds
/// `threshold`, per model; the report is the union over models. When a list
/// is shorter than `rank` (small worlds), the deepest neighbor stands in.
pub fn find_high_degree_outliers(
    models: &[NeighborTable],
    rank: usize,
    threshold: f64,
) -> RemovalReport {
    assert!(rank >= 1, "rank is 1-based");
    let mut union = std::collections::BTreeSet::new();
    let mut per_model_counts = Vec::with_capacity(models.len());
    for t in models {
        let mut count = 0;
        for i in 0..t.rows() {
            let list = t.neighbors(i);
            let probe = list.get(rank - 1).or(list.last());
            if let Some(n) = probe {
                if n.similarity > threshold {
                    union.insert(i);
                    count += 1;
                }
            }
        }
        per_model_counts.push(count);
    }
    RemovalReport {
        removed: union.into_iter().collect(),
        per_model_counts,
        reason: RemovalReason::HighDegree,
    }
}
