//! The iteration driver: grow k, classify the edges that appear, assess
//! cross-class edges, and stop when the labeling settles.
//!
//! Each iteration handles three situations, strictly in this order:
//!
//! 1. Both endpoints already labeled: same class keeps the edge; different
//!    classes go through merge assessment.
//! 2. Both endpoints outside the graph: connected groups among the outside
//!    nodes become new classes when they reach the minimum size.
//! 3. One endpoint outside: the outside node either attaches to the single
//!    class it touches, triggers assessment when it bridges several, or is
//!    dropped for this round.
//!
//! Later stages see earlier stages' results within the same iteration, so a
//! class born in stage 2 is a real class by the time stage 3 looks at it.

use crate::assess::{assess_subclasses, AssessError, MergeDecision, Verdict};
use crate::config::ValidatedConfig;
use crate::embedding::{
    normalize_rows, EmbeddingError, EmbeddingMatrix, PseudoLabels, UtteranceSet,
};
use crate::graph::{
    aggregate, assign_initial_labels, build_mips, Edge, SpeakerGraph, UnionFind,
};
use crate::knn::{build_neighbor_table, KnnError, NeighborTable};
use crate::preprocess::{
    find_high_degree_outliers, statistic_adapt, PreprocessError, RemovalReport,
};
use crate::assess::DecisionRule;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("model {index}: {source}")]
    Model {
        index: usize,
        source: EmbeddingError,
    },
    #[error("model {index}: {source}")]
    Preprocess {
        index: usize,
        source: PreprocessError,
    },
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error("iteration at k={k}: {source}")]
    Assess { k: usize, source: AssessError },
    #[error("{0}")]
    Shape(String),
    #[error("outlier filter left {active} of {total} utterances; nothing to cluster")]
    EmptyAfterFilter { active: usize, total: usize },
}

/// Which side of the graph an edge's endpoints are on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    InIn,
    OutOut,
    InOut,
}

/// Membership split of a candidate edge against the current graph.
pub fn classify_edge(e: &Edge, g: &SpeakerGraph) -> EdgeKind {
    debug_assert!(!g.contains_edge(e), "classify is for edges not yet kept");
    match (g.is_in_graph(e.a()), g.is_in_graph(e.b())) {
        (true, true) => EdgeKind::InIn,
        (false, false) => EdgeKind::OutOut,
        _ => EdgeKind::InOut,
    }
}

/// One row of the run history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationRecord {
    /// Scheduled k for this iteration.
    pub k: usize,
    /// Utterances in the graph at iteration end.
    pub nodes: usize,
    /// Utterances that entered the graph this iteration.
    pub new_nodes: usize,
    /// Classes at iteration end.
    pub classes: usize,
    /// Class pairs united by a merge verdict this iteration.
    pub merges: usize,
    /// Candidate edges dropped by a no-merge verdict or node deletion.
    pub rejected_edges: usize,
}

/// Stop when growth stalls on both axes, or k hits its cap.
///
/// Stalling means: the last iteration added fewer new nodes than
/// `stop_new_node_frac` of the active utterances AND the class count moved
/// by less than `stop_cluster_delta_frac` relative to the previous round.
///
/// `history[0]` is the initial labeling at k_init, not a growth iteration;
/// the two-signal rule needs two growth rounds beyond it, so it never fires
/// on fewer than three rows.
pub fn should_stop(
    history: &[IterationRecord],
    config: &ValidatedConfig,
    m_active: usize,
) -> bool {
    let Some(last) = history.last() else {
        return false;
    };
    if last.k >= config.k_max {
        return true;
    }
    if history.len() < 3 {
        return false;
    }
    let prev = &history[history.len() - 2];
    let few_new = (last.new_nodes as f64) < config.stop_new_node_frac * m_active as f64;
    let delta = (last.classes as i64 - prev.classes as i64).unsigned_abs() as f64;
    let stable = delta / (prev.classes.max(1) as f64) < config.stop_cluster_delta_frac;
    few_new && stable
}

/// Engine toggles that are not clustering parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Skip the recentering step (embeddings already domain-matched).
    pub skip_adaptation: bool,
    /// Keep a per-iteration copy of the edge set.
    pub collect_graph_snapshots: bool,
    /// Keep every assessment's fitted parameters and verdict.
    pub collect_fit_records: bool,
}

/// Edge set as it stood at the end of one iteration.
#[derive(Debug, Clone)]
pub struct GraphSnapshot {
    pub k: usize,
    pub edges: Vec<Edge>,
}

/// One assessment: which two classes, what every model said, and the vote.
#[derive(Debug, Clone)]
pub struct FitRecord {
    pub k: usize,
    /// Smallest member index of each side, a stable class handle for logs.
    pub class_a: usize,
    pub class_b: usize,
    pub verdict: Verdict,
    pub rule: DecisionRule,
    pub per_model: Vec<MergeDecision>,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub labels: PseudoLabels,
    pub history: Vec<IterationRecord>,
    pub removal: RemovalReport,
    /// Final scheduled k when the run stopped.
    pub k_final: usize,
    /// Utterances surviving the outlier filter.
    pub m_active: usize,
    pub graph_snapshots: Vec<GraphSnapshot>,
    pub fit_records: Vec<FitRecord>,
}

struct Engine<'a> {
    models: Vec<EmbeddingMatrix>,
    tables: Vec<NeighborTable>,
    active: Vec<usize>,
    config: &'a ValidatedConfig,
    k_cap: usize,
    graph: SpeakerGraph,
    collect_fits: bool,
    // per-iteration state
    nominal_k: usize,
    cache: HashMap<(usize, usize), Verdict>,
    merges: usize,
    rejected: usize,
    fits: Vec<FitRecord>,
}

impl<'a> Engine<'a> {
    /// Union of every active pivot's voted edges at depth `k_eff`.
    fn union_mips(&self, k_eff: usize) -> BTreeSet<Edge> {
        let per_pivot: Vec<Vec<Edge>> = self
            .active
            .par_iter()
            .map(|&p| build_mips(&self.tables, p, k_eff).expect("depth within table cap"))
            .collect();
        per_pivot.into_iter().flatten().collect()
    }

    /// Cached merge assessment between two live class roots.
    fn assess_pair(&mut self, ra: usize, rb: usize) -> Result<Verdict, RunError> {
        let key = (ra.min(rb), ra.max(rb));
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let a = self.graph.members_of_root(ra);
        let b = self.graph.members_of_root(rb);
        let outcome =
            assess_subclasses(&[&a, &b], &self.models, self.config).map_err(|source| {
                RunError::Assess {
                    k: self.nominal_k,
                    source,
                }
            })?;
        if self.collect_fits {
            self.fits.push(FitRecord {
                k: self.nominal_k,
                class_a: a[0],
                class_b: b[0],
                verdict: outcome.verdict,
                rule: outcome.rule,
                per_model: outcome.per_model,
            });
        }
        self.cache.insert(key, outcome.verdict);
        Ok(outcome.verdict)
    }

    /// Stage-1 treatment of an edge between two labeled endpoints.
    fn handle_in_in(&mut self, e: Edge) -> Result<(), RunError> {
        let ra = self.graph.root(e.a());
        let rb = self.graph.root(e.b());
        if ra == rb {
            self.graph.add_edge(e);
            return Ok(());
        }
        match self.assess_pair(ra, rb)? {
            Verdict::Merge => {
                self.graph.add_edge(e);
                self.merges += 1;
            }
            Verdict::NoMerge => {
                self.rejected += 1;
            }
        }
        Ok(())
    }

    /// Stage 2: rebuild the subgraph over out-of-graph nodes from the full
    /// current edge table, and promote components that reach minimum size.
    ///
    /// Working from the full table (not just this round's new edges) is what
    /// lets under-sized groups keep their old edges as live candidates and
    /// eventually rejoin once they grow.
    fn stage_out_out(&mut self, union_now: &BTreeSet<Edge>) {
        let out_edges: Vec<Edge> = union_now
            .iter()
            .filter(|e| !self.graph.is_in_graph(e.a()) && !self.graph.is_in_graph(e.b()))
            .copied()
            .collect();
        if out_edges.is_empty() {
            return;
        }
        let mut scratch = UnionFind::new(self.graph.len());
        let mut involved = BTreeSet::new();
        for e in &out_edges {
            scratch.union(e.a(), e.b());
            involved.insert(e.a());
            involved.insert(e.b());
        }
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        for &v in &involved {
            *sizes.entry(scratch.find(v)).or_insert(0) += 1;
        }
        for e in &out_edges {
            if sizes[&scratch.find(e.a())] >= self.config.min_cluster_size {
                self.graph.add_edge(*e);
            }
        }
    }

    /// Stage 3: edges left over after stages 1 and 2, reclassified against
    /// the graph as it stands now.
    fn stage_in_out(&mut self, leftover: &[Edge]) -> Result<(), RunError> {
        let mut late_in_in = Vec::new();
        let mut groups: BTreeMap<usize, Vec<Edge>> = BTreeMap::new();
        for &e in leftover {
            match (self.graph.is_in_graph(e.a()), self.graph.is_in_graph(e.b())) {
                // both endpoints got labeled since stage 1: a class-to-class edge
                (true, true) => late_in_in.push(e),
                // still fully outside: stays a candidate for the next round
                (false, false) => {}
                (true, false) => groups.entry(e.b()).or_default().push(e),
                (false, true) => groups.entry(e.a()).or_default().push(e),
            }
        }
        for e in late_in_in {
            self.handle_in_in(e)?;
        }
        for (node, edges) in groups {
            let mut roots: Vec<usize> = edges
                .iter()
                .map(|e| {
                    let inside = if e.a() == node { e.b() } else { e.a() };
                    self.graph.root(inside)
                })
                .collect();
            roots.sort_unstable();
            roots.dedup();
            if roots.len() == 1 {
                for e in edges {
                    self.graph.add_edge(e);
                }
                continue;
            }
            // the node bridges several classes: merge them only if pairwise
            // verdicts, taken transitively, pull every touched class together
            let mut closure = UnionFind::new(roots.len());
            for i in 0..roots.len() {
                for j in (i + 1)..roots.len() {
                    if self.assess_pair(roots[i], roots[j])? == Verdict::Merge {
                        closure.union(i, j);
                    }
                }
            }
            let united = (1..roots.len()).all(|i| closure.find(i) == closure.find(0));
            if united {
                self.merges += roots.len() - 1;
                for e in edges {
                    self.graph.add_edge(e);
                }
            } else {
                // deleted for this round; the node may return with new edges
                self.rejected += edges.len();
            }
        }
        Ok(())
    }

    /// One growth iteration at scheduled depth `k_nominal`. Returns the new
    /// full edge table (next round's baseline) and the history row.
    fn run_iteration(
        &mut self,
        k_nominal: usize,
        union_prev: &BTreeSet<Edge>,
    ) -> Result<(BTreeSet<Edge>, IterationRecord), RunError> {
        self.cache.clear();
        self.merges = 0;
        self.rejected = 0;
        self.nominal_k = k_nominal;
        let k_eff = k_nominal.min(self.k_cap);
        let union_now = self.union_mips(k_eff);
        let nodes_before = self.graph.in_graph_count();

        let new_edges: Vec<Edge> = union_now
            .iter()
            .filter(|e| !union_prev.contains(e) && !self.graph.contains_edge(e))
            .copied()
            .collect();

        let mut leftover = Vec::new();
        for &e in &new_edges {
            if self.graph.is_in_graph(e.a()) && self.graph.is_in_graph(e.b()) {
                self.handle_in_in(e)?;
            } else {
                leftover.push(e);
            }
        }
        self.stage_out_out(&union_now);
        self.stage_in_out(&leftover)?;

        let nodes = self.graph.in_graph_count();
        let classes = self.graph.connected_components().count;
        let record = IterationRecord {
            k: k_nominal,
            nodes,
            new_nodes: nodes - nodes_before,
            classes,
            merges: self.merges,
            rejected_edges: self.rejected,
        };
        Ok((union_now, record))
    }

    fn snapshot(&self, k: usize) -> GraphSnapshot {
        GraphSnapshot {
            k,
            edges: self.graph.edges().copied().collect(),
        }
    }
}

/// The whole pipeline: preprocess, neighbor tables, initial graph, growth
/// iterations until the stopping rule fires. Deterministic for fixed inputs
/// and config, regardless of thread count.
pub fn run_pgmvg(
    models_in: &[EmbeddingMatrix],
    ids: &UtteranceSet,
    config: &ValidatedConfig,
    options: &RunOptions,
) -> Result<RunOutput, RunError> {
    if models_in.is_empty() {
        return Err(RunError::Shape("no embedding models given".into()));
    }
    let rows = models_in[0].rows();
    for (i, m) in models_in.iter().enumerate() {
        if m.rows() != rows {
            return Err(RunError::Shape(format!(
                "model {i} has {} rows, model 0 has {rows}",
                m.rows()
            )));
        }
    }
    if ids.len() != rows {
        return Err(RunError::Shape(format!(
            "{} ids for {rows} embedding rows",
            ids.len()
        )));
    }
    if rows < 2 {
        return Err(RunError::Shape(format!("{rows} utterances; need at least 2")));
    }

    let mut prepped = Vec::with_capacity(models_in.len());
    for (index, m) in models_in.iter().enumerate() {
        let normed =
            normalize_rows(m).map_err(|source| RunError::Model { index, source })?;
        let adapted = if options.skip_adaptation {
            normed
        } else {
            statistic_adapt(&normed)
                .map_err(|source| RunError::Preprocess { index, source })?
        };
        prepped.push(adapted);
    }

    // outlier scan over everything, then mask and (if needed) rebuild tables
    let full_mask = vec![true; rows];
    let scan_depth = config.outlier_rank.min(rows - 1);
    let scan_tables: Vec<NeighborTable> = prepped
        .iter()
        .map(|m| build_neighbor_table(m, &full_mask, scan_depth))
        .collect::<Result<_, _>>()?;
    let removal =
        find_high_degree_outliers(&scan_tables, config.outlier_rank, config.outlier_threshold);
    let mut mask = full_mask;
    for &i in &removal.removed {
        mask[i] = false;
    }
    let m_active = mask.iter().filter(|b| **b).count();
    if m_active < 2 {
        return Err(RunError::EmptyAfterFilter {
            active: m_active,
            total: rows,
        });
    }

    let k_cap = config.k_max.min(m_active - 1);
    let tables: Vec<NeighborTable> = if removal.is_empty() && scan_depth >= k_cap {
        scan_tables
    } else {
        drop(scan_tables);
        prepped
            .iter()
            .map(|m| build_neighbor_table(m, &mask, k_cap))
            .collect::<Result<_, _>>()?
    };

    let active: Vec<usize> = (0..rows).filter(|&i| mask[i]).collect();
    let mut engine = Engine {
        models: prepped,
        tables,
        active,
        config,
        k_cap,
        graph: SpeakerGraph::new(rows),
        collect_fits: options.collect_fit_records,
        nominal_k: config.k_init,
        cache: HashMap::new(),
        merges: 0,
        rejected: 0,
        fits: Vec::new(),
    };

    // initial pass: graph at k_init, small components pruned
    let k_eff0 = config.k_init.min(engine.k_cap);
    let mut union_prev = engine.union_mips(k_eff0);
    let per_edge: Vec<Vec<Edge>> = vec![union_prev.iter().copied().collect()];
    let g0 = aggregate(&per_edge, rows);
    let (_, pruned) = assign_initial_labels(g0, config.min_cluster_size);
    engine.graph = pruned;

    let mut history = Vec::new();
    let mut snapshots = Vec::new();
    let nodes0 = engine.graph.in_graph_count();
    history.push(IterationRecord {
        k: config.k_init,
        nodes: nodes0,
        new_nodes: nodes0,
        classes: engine.graph.connected_components().count,
        merges: 0,
        rejected_edges: 0,
    });
    if options.collect_graph_snapshots {
        snapshots.push(engine.snapshot(config.k_init));
    }

    let mut k_current = config.k_init;
    while !should_stop(&history, config, m_active) {
        let k_next = (k_current + config.k_step).min(config.k_max);
        let (union_now, record) = engine.run_iteration(k_next, &union_prev)?;
        union_prev = union_now;
        history.push(record);
        if options.collect_graph_snapshots {
            snapshots.push(engine.snapshot(k_next));
        }
        k_current = k_next;
    }

    let view = engine.graph.connected_components();
    let labels = PseudoLabels::new(view.ids).expect("component ids are dense");
    debug_assert!(min_class_size_ok(&labels, config.min_cluster_size));

    Ok(RunOutput {
        labels,
        history,
        removal,
        k_final: k_current,
        m_active,
        graph_snapshots: snapshots,
        fit_records: engine.fits,
    })
}

fn min_class_size_ok(labels: &PseudoLabels, min_size: usize) -> bool {
    let mut counts = HashMap::new();
    for &l in labels.labels() {
        if l >= 0 {
            *counts.entry(l).or_insert(0usize) += 1;
        }
    }
    counts.values().all(|&c| c >= min_size)
}
