//! Whole-pipeline runs on generated worlds: recovery quality, history
//! invariants, and edge-set consistency that unit tests cannot see.

use pgmvg::{
    build_mips, build_neighbor_table, evaluate, generate, normalize_rows, run_pgmvg,
    statistic_adapt, Edge, RunConfig, RunOptions, SynthSpec,
};
use std::collections::BTreeSet;

fn run_world(spec: &SynthSpec, config: &RunConfig, options: &RunOptions) -> pgmvg::RunOutput {
    let (models, ids, _) = generate(spec).unwrap();
    let validated = config.clone().validate().unwrap();
    run_pgmvg(&models, &ids, &validated, options).unwrap()
}

#[test]
fn reference_world_recovers_speakers() {
    let spec = SynthSpec::default(); // 50 speakers x 40 utts, dim 64, 3 models
    let (models, ids, truth) = generate(&spec).unwrap();
    let config = RunConfig::default().validate().unwrap();
    let out = run_pgmvg(&models, &ids, &config, &RunOptions::default()).unwrap();
    let report = evaluate(out.labels.labels(), truth.labels()).unwrap();
    assert!(report.pairwise_f >= 0.95, "F = {}", report.pairwise_f);
    assert!(report.nmi >= 0.95, "NMI = {}", report.nmi);
    assert!(report.coverage >= 0.90, "coverage = {}", report.coverage);
}

#[test]
fn kept_edges_are_always_voted_edges() {
    let spec = SynthSpec {
        num_speakers: 10,
        utts_per_speaker: (15, 25),
        dim: 32,
        intra_noise: 0.4,
        model_count: 2,
        model_rotation: true,
        model_noise: 0.1,
        outlier_frac: 0.0,
        seed: 21,
    };
    let (models, ids, _) = generate(&spec).unwrap();
    let config = RunConfig {
        k_max: 40,
        ..RunConfig::default()
    }
    .validate()
    .unwrap();
    let options = RunOptions {
        collect_graph_snapshots: true,
        ..RunOptions::default()
    };
    let out = run_pgmvg(&models, &ids, &config, &options).unwrap();

    // rebuild the voted edge table independently at each snapshot depth
    let prepped: Vec<_> = models
        .iter()
        .map(|m| statistic_adapt(&normalize_rows(m).unwrap()).unwrap())
        .collect();
    let rows = prepped[0].rows();
    let mask = vec![true; rows];
    assert!(out.removal.is_empty(), "this world has no outliers");
    let depth = config.k_max.min(rows - 1);
    let tables: Vec<_> = prepped
        .iter()
        .map(|m| build_neighbor_table(m, &mask, depth).unwrap())
        .collect();

    for snap in &out.graph_snapshots {
        let k_eff = snap.k.min(depth);
        let mut voted: BTreeSet<Edge> = BTreeSet::new();
        for pivot in 0..rows {
            voted.extend(build_mips(&tables, pivot, k_eff).unwrap());
        }
        for e in &snap.edges {
            assert!(voted.contains(e), "edge {e:?} at k={} was never voted", snap.k);
        }
    }
}

#[test]
fn history_follows_the_k_schedule() {
    let spec = SynthSpec {
        num_speakers: 8,
        utts_per_speaker: (12, 18),
        dim: 24,
        intra_noise: 0.35,
        model_count: 2,
        model_rotation: true,
        model_noise: 0.08,
        outlier_frac: 0.0,
        seed: 33,
    };
    let config = RunConfig {
        k_init: 5,
        k_step: 5,
        k_max: 60,
        ..RunConfig::default()
    };
    let out = run_world(&spec, &config, &RunOptions::default());
    assert!(out.history.len() >= 2);
    assert_eq!(out.history[0].k, 5);
    for w in out.history.windows(2) {
        assert_eq!(w[1].k, (w[0].k + 5).min(60));
    }
    assert_eq!(out.k_final, out.history.last().unwrap().k);
    // node counts never shrink; labeled nodes never leave the graph
    for w in out.history.windows(2) {
        assert!(w[1].nodes >= w[0].nodes);
        assert_eq!(w[1].new_nodes, w[1].nodes - w[0].nodes);
    }
}

#[test]
fn near_duplicate_junk_is_filtered_before_clustering() {
    // junk rows are near-copies of one vector; once the block is larger than
    // outlier_rank, each junk row's rank-th neighbor is another junk row with
    // similarity ~1 and the whole block gets removed up front
    let spec = SynthSpec {
        num_speakers: 10,
        utts_per_speaker: (20, 30),
        dim: 32,
        intra_noise: 0.35,
        model_count: 2,
        model_rotation: true,
        model_noise: 0.1,
        outlier_frac: 0.2,
        seed: 9,
    };
    let (models, ids, truth) = generate(&spec).unwrap();
    let junk: Vec<usize> = (0..truth.len())
        .filter(|&i| truth.labels()[i] == -1)
        .collect();
    assert!(junk.len() > 40, "need a junk block bigger than the rank");

    let config = RunConfig {
        k_max: 60,
        outlier_rank: 40,
        ..RunConfig::default()
    }
    .validate()
    .unwrap();
    let out = run_pgmvg(&models, &ids, &config, &RunOptions::default()).unwrap();

    for &j in &junk {
        assert!(out.removal.removed.contains(&j), "junk row {j} not removed");
        assert_eq!(out.labels.labels()[j], -1);
    }
    for &r in &out.removal.removed {
        assert_eq!(truth.labels()[r], -1, "clean row {r} wrongly removed");
    }
    let report = evaluate(out.labels.labels(), truth.labels()).unwrap();
    assert!(report.pairwise_f >= 0.9, "F = {}", report.pairwise_f);
}

#[test]
fn fit_records_expose_every_assessment() {
    let spec = SynthSpec {
        num_speakers: 6,
        utts_per_speaker: (15, 15),
        dim: 24,
        intra_noise: 0.4,
        model_count: 2,
        model_rotation: true,
        model_noise: 0.1,
        outlier_frac: 0.0,
        seed: 40,
    };
    let config = RunConfig {
        k_max: 40,
        ..RunConfig::default()
    };
    let options = RunOptions {
        collect_fit_records: true,
        ..RunOptions::default()
    };
    let out = run_world(&spec, &config, &options);
    let total_verdicts: usize = out.history.iter().map(|r| r.merges).sum::<usize>()
        + out.history.iter().map(|r| r.rejected_edges).sum::<usize>();
    if total_verdicts > 0 {
        assert!(!out.fit_records.is_empty());
    }
    for f in &out.fit_records {
        assert_eq!(f.per_model.len(), 2);
        assert!(f.class_a != f.class_b);
        for d in &f.per_model {
            assert!(d.fit.mu1 >= d.fit.mu2);
            assert!(d.fit.w1 > 0.0 && d.fit.w1 < 1.0);
        }
    }
}
