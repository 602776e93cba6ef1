//! Exact cosine k-nearest-neighbor tables.
//!
//! One table per model, built once to the deepest k the run can reach, then
//! sliced per iteration. Slicing works because each list is fully sorted:
//! the top-k at a shallower depth is literally a prefix of the stored list,
//! so growing k never changes which neighbors the earlier depths saw.
//!
//! Search is exact (no approximate index). Candidate ordering is a total
//! order: similarity descending, then index ascending. That makes tables
//! reproducible bit-for-bit regardless of thread count.

use crate::embedding::{dot, EmbeddingMatrix};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("need at least 2 active utterances, have {0}")]
    TooFewActive(usize),
    #[error("depth {requested} exceeds computed depth {computed}")]
    DepthExceeded { requested: usize, computed: usize },
    #[error("mask length {mask} does not match row count {rows}")]
    MaskMismatch { mask: usize, rows: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub similarity: f64,
}

/// Ranked neighbor lists for one model. Inactive rows hold empty lists and
/// never appear inside another row's list.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    model_id: usize,
    k_computed: usize,
    lists: Vec<Vec<Neighbor>>,
}

fn by_rank(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    b.similarity
        .partial_cmp(&a.similarity)
        .expect("similarities are finite")
        .then_with(|| a.index.cmp(&b.index))
}

/// Builds the table for all active rows at depth `k_depth`.
///
/// Each active row gets its `k_depth` most similar active rows (fewer when
/// fewer exist), self excluded. Work splits per row; each row's result lands
/// in its own slot, so output does not depend on scheduling.
pub fn build_neighbor_table(
    m: &EmbeddingMatrix,
    mask: &[bool],
    k_depth: usize,
) -> Result<NeighborTable, KnnError> {
    if mask.len() != m.rows() {
        return Err(KnnError::MaskMismatch {
            mask: mask.len(),
            rows: m.rows(),
        });
    }
    assert!(k_depth >= 1, "k_depth must be at least 1");
    let active: Vec<usize> = (0..m.rows()).filter(|&i| mask[i]).collect();
    if active.len() < 2 {
        return Err(KnnError::TooFewActive(active.len()));
    }

    let lists: Vec<Vec<Neighbor>> = (0..m.rows())
        .into_par_iter()
        .map(|i| {
            if !mask[i] {
                return Vec::new();
            }
            let row = m.row(i);
            let mut cand: Vec<Neighbor> = active
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| Neighbor {
                    index: j,
                    similarity: dot(row, m.row(j)),
                })
                .collect();
            if cand.len() > k_depth {
                cand.select_nth_unstable_by(k_depth - 1, by_rank);
                cand.truncate(k_depth);
            }
            cand.sort_unstable_by(by_rank);
            cand
        })
        .collect();

    Ok(NeighborTable {
        model_id: m.model_id(),
        k_computed: k_depth,
        lists,
    })
}

impl NeighborTable {
    pub fn model_id(&self) -> usize {
        self.model_id
    }

    pub fn k_computed(&self) -> usize {
        self.k_computed
    }

    pub fn rows(&self) -> usize {
        self.lists.len()
    }

    /// Full stored list for row `i` (empty for inactive rows).
    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    /// First `k` entries of row `i`'s list. Asking beyond the built depth is
    /// an error; asking beyond the list length (small active sets) is not.
    pub fn topk_slice(&self, i: usize, k: usize) -> Result<&[Neighbor], KnnError> {
        if k > self.k_computed {
            return Err(KnnError::DepthExceeded {
                requested: k,
                computed: self.k_computed,
            });
        }
        let list = &self.lists[i];
        Ok(&list[..k.min(list.len())])
    }
}
