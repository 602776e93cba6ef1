//! Merge assessment: fit two Gaussians to pairwise similarity scores and
//! decide whether candidate sub-classes belong to one speaker.
//!
//! Intuition: scores between two same-speaker sub-classes pile into one
//! high-similarity mode, while different speakers produce two modes (the
//! intra-class mode and a lower cross-class mode). The fitted component pair
//! exposes which picture we are in; four ordered rules turn it into a
//! verdict. With several models, each votes and a strict majority merges.

use crate::config::ValidatedConfig;
use crate::embedding::EmbeddingMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssessError {
    #[error("sub-class union has {0} utterances, need at least 2")]
    TooFewUtterances(usize),
    #[error("{0} scores, need at least 4 to fit two components")]
    TooFewScores(usize),
    #[error("sub-classes overlap at utterance {0}")]
    OverlappingSubclasses(usize),
}

/// Two-component 1-D Gaussian mixture, components ordered so `mu1 >= mu2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPairFit {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub w1: f64,
    pub w2: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Merge,
    NoMerge,
}

/// Which rule fired, in priority order. The first three merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DecisionRule {
    /// Even the lower component mean clears th_high: everything is similar.
    SecondMeanHigh,
    /// The high component holds the majority of mass (w1 > 0.5).
    DominantPrimary,
    /// The one-sigma bands overlap within epsilon and mu1 clears th_low.
    OverlappingBands,
    /// None of the above: two genuinely separated populations.
    Separated,
}

impl DecisionRule {
    pub fn verdict(self) -> Verdict {
        match self {
            DecisionRule::Separated => Verdict::NoMerge,
            _ => Verdict::Merge,
        }
    }
}

/// One model's decision for one candidate merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeDecision {
    pub verdict: Verdict,
    pub rule: DecisionRule,
    pub fit: GaussianPairFit,
}

/// The cross-model vote: final verdict plus every model's decision.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    pub verdict: Verdict,
    pub rule: DecisionRule,
    pub per_model: Vec<MergeDecision>,
}

/// Similarities of all unordered member pairs across the union of the given
/// sub-classes, intra-pairs included. Count is U(U-1)/2 for union size U.
///
/// Intra-pairs matter: when both sub-classes are really one speaker, they
/// are what fills the single high mode the rules look for.
pub fn collect_scores(
    subclasses: &[&[usize]],
    m: &EmbeddingMatrix,
) -> Result<Vec<f64>, AssessError> {
    let mut union: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for class in subclasses {
        for &i in *class {
            if !seen.insert(i) {
                return Err(AssessError::OverlappingSubclasses(i));
            }
            union.push(i);
        }
    }
    if union.len() < 2 {
        return Err(AssessError::TooFewUtterances(union.len()));
    }
    union.sort_unstable();
    let mut scores = Vec::with_capacity(union.len() * (union.len() - 1) / 2);
    for (pos, &i) in union.iter().enumerate() {
        for &j in &union[pos + 1..] {
            scores.push(m.similarity(i, j));
        }
    }
    Ok(scores)
}

/// EM fit of the mixture. Deterministic: scores are sorted internally and
/// initialization splits at the median, so any permutation of the same
/// multiset produces the identical fit.
pub fn fit_double_gaussian(
    scores: &[f64],
    sigma_floor: f64,
    max_iters: usize,
    tol: f64,
) -> Result<GaussianPairFit, AssessError> {
    fit_double_gaussian_traced(scores, sigma_floor, max_iters, tol).map(|(fit, _)| fit)
}

/// Same fit, also returning the log-likelihood after each EM iteration
/// (used to check the likelihood never decreases).
pub fn fit_double_gaussian_traced(
    scores: &[f64],
    sigma_floor: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(GaussianPairFit, Vec<f64>), AssessError> {
    if scores.len() < 4 {
        return Err(AssessError::TooFewScores(scores.len()));
    }
    let mut xs = scores.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let n = xs.len();

    // median split: low half seeds the low component, high half the high one
    let half = n / 2;
    let (lo, hi) = xs.split_at(half);
    let stats = |v: &[f64]| -> (f64, f64) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        (mean, var.sqrt().max(sigma_floor))
    };
    let (mut mu_lo, mut sg_lo) = stats(lo);
    let (mut mu_hi, mut sg_hi) = stats(hi);
    let mut w_hi = hi.len() as f64 / n as f64;

    let ln_norm = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let log_density = |x: f64, mu: f64, sg: f64| -> f64 {
        let z = (x - mu) / sg;
        -ln_norm - sg.ln() - 0.5 * z * z
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut resp_hi = vec![0.0f64; n];

    for _ in 0..max_iters {
        iterations += 1;
        // E-step in log space; mixture weights of zero stay harmless
        let mut ll = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let a_hi = if w_hi > 0.0 {
                w_hi.ln() + log_density(x, mu_hi, sg_hi)
            } else {
                f64::NEG_INFINITY
            };
            let a_lo = if w_hi < 1.0 {
                (1.0 - w_hi).ln() + log_density(x, mu_lo, sg_lo)
            } else {
                f64::NEG_INFINITY
            };
            let m = a_hi.max(a_lo);
            let lse = m + ((a_hi - m).exp() + (a_lo - m).exp()).ln();
            ll += lse;
            resp_hi[i] = (a_hi - lse).exp();
        }
        trace.push(ll);

        // M-step; a starved component keeps its location and loses its mass
        let n_hi: f64 = resp_hi.iter().sum();
        let n_lo = n as f64 - n_hi;
        if n_hi > 1e-12 {
            let mean = xs
                .iter()
                .zip(resp_hi.iter())
                .map(|(x, r)| r * x)
                .sum::<f64>()
                / n_hi;
            let var = xs
                .iter()
                .zip(resp_hi.iter())
                .map(|(x, r)| r * (x - mean).powi(2))
                .sum::<f64>()
                / n_hi;
            mu_hi = mean;
            sg_hi = var.sqrt().max(sigma_floor);
        }
        if n_lo > 1e-12 {
            let mean = xs
                .iter()
                .zip(resp_hi.iter())
                .map(|(x, r)| (1.0 - r) * x)
                .sum::<f64>()
                / n_lo;
            let var = xs
                .iter()
                .zip(resp_hi.iter())
                .map(|(x, r)| (1.0 - r) * (x - mean).powi(2))
                .sum::<f64>()
                / n_lo;
            mu_lo = mean;
            sg_lo = var.sqrt().max(sigma_floor);
        }
        w_hi = n_hi / n as f64;

        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            let cur = trace[trace.len() - 1];
            if (cur - prev).abs() <= tol * (1.0 + prev.abs()) {
                break;
            }
        }
    }

    // order components: index 1 takes the larger mean
    let (mu1, sg1, w1, mu2, sg2) = if mu_hi >= mu_lo {
        (mu_hi, sg_hi, w_hi, mu_lo, sg_lo)
    } else {
        (mu_lo, sg_lo, 1.0 - w_hi, mu_hi, sg_hi)
    };
    let fit = GaussianPairFit {
        mu1,
        mu2,
        sigma1: sg1,
        sigma2: sg2,
        w1,
        w2: 1.0 - w1,
        log_likelihood: *trace.last().expect("at least one iteration"),
        iterations,
    };
    Ok((fit, trace))
}

/// Applies the four rules in priority order; the first match wins.
pub fn decide_merge(
    fit: &GaussianPairFit,
    th_high: f64,
    th_low: f64,
    epsilon: f64,
) -> MergeDecision {
    debug_assert!(fit.mu1 >= fit.mu2, "components must be ordered");
    let rule = if fit.mu2 > th_high {
        DecisionRule::SecondMeanHigh
    } else if fit.w1 > 0.5 {
        DecisionRule::DominantPrimary
    } else if fit.mu1 - fit.sigma1 < fit.mu2 + fit.sigma2 + epsilon && fit.mu1 > th_low {
        DecisionRule::OverlappingBands
    } else {
        DecisionRule::Separated
    };
    MergeDecision {
        verdict: rule.verdict(),
        rule,
        fit: *fit,
    }
}

/// Runs score collection, fitting, and the rules once per model, then takes
/// a strict-majority vote. An exact tie (even model count) does not merge.
///
/// The reported rule is the most common one among the models on the winning
/// side; rule-priority order breaks ties.
pub fn assess_subclasses(
    subclasses: &[&[usize]],
    models: &[EmbeddingMatrix],
    config: &ValidatedConfig,
) -> Result<VoteOutcome, AssessError> {
    assert!(!models.is_empty(), "need at least one model");
    let mut per_model = Vec::with_capacity(models.len());
    for m in models {
        let scores = collect_scores(subclasses, m)?;
        let fit = fit_double_gaussian(
            &scores,
            config.sigma_floor,
            config.em_max_iters,
            config.em_tol,
        )?;
        per_model.push(decide_merge(&fit, config.th_high, config.th_low, config.epsilon));
    }
    let merge_votes = per_model
        .iter()
        .filter(|d| d.verdict == Verdict::Merge)
        .count();
    let verdict = if 2 * merge_votes > models.len() {
        Verdict::Merge
    } else {
        Verdict::NoMerge
    };
    let mut counts: std::collections::BTreeMap<DecisionRule, usize> = std::collections::BTreeMap::new();
    for d in &per_model {
        if d.verdict == verdict {
            *counts.entry(d.rule).or_insert(0) += 1;
        }
    }
    let rule = counts
        .iter()
        .max_by(|(ra, ca), (rb, cb)| ca.cmp(cb).then_with(|| rb.cmp(ra)))
        .map(|(r, _)| *r)
        .unwrap_or(DecisionRule::Separated);
    Ok(VoteOutcome {
        verdict,
        rule,
        per_model,
    })
}
