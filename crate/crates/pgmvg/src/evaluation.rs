//! Partition-agreement metrics against ground truth.
//!
//! Both metrics ignore utterances that either side leaves unlabeled (-1);
//! the prediction's labeled fraction is reported separately as coverage, so
//! "good clusters on little data" and "poor clusters on everything" stay
//! distinguishable.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction has {pred} labels, truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no same-class pairs on one side; pairwise scores undefined")]
    NoLabeledPairs,
    #[error("a side has fewer than 2 classes; mutual information undefined")]
    DegenerateLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub pairwise_precision: f64,
    pub pairwise_recall: f64,
    pub pairwise_f: f64,
    pub nmi: f64,
    pub num_pred_classes: usize,
    pub num_true_classes: usize,
    pub coverage: f64,
}

impl ClusterReport {
    /// Header plus value row, tab-separated.
    pub fn to_tsv(&self) -> String {
        format!(
            "pairwise_precision\tpairwise_recall\tpairwise_f\tnmi\tpred_classes\ttrue_classes\tcoverage\n{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{:.6}\n",
            self.pairwise_precision,
            self.pairwise_recall,
            self.pairwise_f,
            self.nmi,
            self.num_pred_classes,
            self.num_true_classes,
            self.coverage
        )
    }
}

/// Indices where both sides carry a real label.
fn covered(pred: &[i64], truth: &[i64]) -> Result<Vec<usize>, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok((0..pred.len())
        .filter(|&i| pred[i] >= 0 && truth[i] >= 0)
        .collect())
}

/// Joint and marginal class counts over the covered indices.
type ClassCounts = std::collections::HashMap<i64, u64>;
type JointCounts = std::collections::HashMap<(i64, i64), u64>;

fn contingency(
    pred: &[i64],
    truth: &[i64],
    idx: &[usize],
) -> (JointCounts, ClassCounts, ClassCounts) {
    let mut joint = std::collections::HashMap::new();
    let mut by_pred = std::collections::HashMap::new();
    let mut by_truth = std::collections::HashMap::new();
    for &i in idx {
        *joint.entry((pred[i], truth[i])).or_insert(0) += 1;
        *by_pred.entry(pred[i]).or_insert(0) += 1;
        *by_truth.entry(truth[i]).or_insert(0) += 1;
    }
    (joint, by_pred, by_truth)
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pairwise (precision, recall, f) over covered utterances: precision is the
/// fraction of same-prediction pairs that truly share a speaker, recall the
/// fraction of true same-speaker pairs the prediction reunites.
pub fn pairwise_scores(pred: &[i64], truth: &[i64]) -> Result<(f64, f64, f64), EvalError> {
    let idx = covered(pred, truth)?;
    let (joint, by_pred, by_truth) = contingency(pred, truth, &idx);
    let tp: u64 = joint.values().map(|&n| pairs(n)).sum();
    let pred_pairs: u64 = by_pred.values().map(|&n| pairs(n)).sum();
    let truth_pairs: u64 = by_truth.values().map(|&n| pairs(n)).sum();
    if pred_pairs == 0 || truth_pairs == 0 {
        return Err(EvalError::NoLabeledPairs);
    }
    let precision = tp as f64 / pred_pairs as f64;
    let recall = tp as f64 / truth_pairs as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((precision, recall, f))
}

/// Normalized mutual information with arithmetic-mean normalization:
/// 2·I(P;T) / (H(P) + H(T)), over covered utterances.
pub fn nmi(pred: &[i64], truth: &[i64]) -> Result<f64, EvalError> {
    let idx = covered(pred, truth)?;
    let (joint, by_pred, by_truth) = contingency(pred, truth, &idx);
    if by_pred.len() < 2 || by_truth.len() < 2 {
        return Err(EvalError::DegenerateLabels);
    }
    let n = idx.len() as f64;
    let entropy = |counts: &std::collections::HashMap<i64, u64>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let hp = entropy(&by_pred);
    let ht = entropy(&by_truth);
    let mut mi = 0.0;
    for (&(p, t), &c) in &joint {
        let pj = c as f64 / n;
        let pp = by_pred[&p] as f64 / n;
        let pt = by_truth[&t] as f64 / n;
        mi += pj * (pj / (pp * pt)).ln();
    }
    Ok((2.0 * mi / (hp + ht)).clamp(0.0, 1.0))
}

/// Full report; coverage counts utterances the prediction labeled, over all
/// utterances (not just covered ones).
pub fn evaluate(pred: &[i64], truth: &[i64]) -> Result<ClusterReport, EvalError> {
    let (precision, recall, f) = pairwise_scores(pred, truth)?;
    let nmi_value = nmi(pred, truth)?;
    let distinct = |v: &[i64]| {
        v.iter()
            .filter(|&&l| l >= 0)
            .collect::<std::collections::HashSet<_>>()
            .len()
    };
    let labeled = pred.iter().filter(|&&l| l >= 0).count();
    Ok(ClusterReport {
        pairwise_precision: precision,
        pairwise_recall: recall,
        pairwise_f: f,
        nmi: nmi_value,
        num_pred_classes: distinct(pred),
        num_true_classes: distinct(truth),
        coverage: labeled as f64 / pred.len().max(1) as f64,
    })
}
