//! The speaker relationship graph and the edge voting that builds it.
//!
//! Construction runs in two steps per pivot utterance:
//!
//! 1. Per model, the pivot's star graph: one edge to each of its top-k
//!    neighbors ([`build_ips`]).
//! 2. The unanimous vote across models: an edge survives only if every
//!    model proposed it for this pivot ([`build_mips`]).
//!
//! [`aggregate`] then unions the surviving edges over all pivots, so an edge
//! makes it into the graph if it wins the vote from either endpoint's side.
//! Connected components over that edge set are the pseudo-classes.

use crate::embedding::PseudoLabels;
use crate::knn::{KnnError, NeighborTable};
use std::collections::BTreeSet;

/// Undirected edge, always stored with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    a: usize,
    b: usize,
}

impl Edge {
    pub fn new(x: usize, y: usize) -> Self {
        assert_ne!(x, y, "self-edge {x}");
        if x < y {
            Edge { a: x, b: y }
        } else {
            Edge { a: y, b: x }
        }
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }
}

/// Disjoint-set forest with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns true when the two elements were in different sets.
    pub fn union(&mut self, x: usize, y: usize) -> bool {
        let rx = self.find(x);
        let ry = self.find(y);
        if rx == ry {
            return false;
        }
        match self.rank[rx].cmp(&self.rank[ry]) {
            std::cmp::Ordering::Less => self.parent[rx] = ry,
            std::cmp::Ordering::Greater => self.parent[ry] = rx,
            std::cmp::Ordering::Equal => {
                self.parent[ry] = rx;
                self.rank[rx] += 1;
            }
        }
        true
    }
}

/// Per-utterance star graph for one model: pivot joined to its top-k.
pub fn build_ips(t: &NeighborTable, pivot: usize, k: usize) -> Result<Vec<Edge>, KnnError> {
    let list = t.topk_slice(pivot, k)?;
    Ok(list.iter().map(|n| Edge::new(pivot, n.index)).collect())
}

/// Unanimous vote: edges of this pivot's star present in every model's star.
/// Result is canonical and sorted.
pub fn build_mips(
    tables: &[NeighborTable],
    pivot: usize,
    k: usize,
) -> Result<Vec<Edge>, KnnError> {
    assert!(!tables.is_empty(), "need at least one model");
    let mut keep: BTreeSet<usize> = tables[0]
        .topk_slice(pivot, k)?
        .iter()
        .map(|n| n.index)
        .collect();
    for t in &tables[1..] {
        let other: BTreeSet<usize> = t.topk_slice(pivot, k)?.iter().map(|n| n.index).collect();
        keep.retain(|i| other.contains(i));
    }
    Ok(keep.into_iter().map(|j| Edge::new(pivot, j)).collect())
}

/// Dense component ids for in-graph utterances, `-1` elsewhere. Ids are
/// assigned in order of each component's smallest member index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentView {
    pub ids: Vec<i64>,
    pub count: usize,
}

/// The evolving graph: voted edges, their components, and the in/out split.
///
/// `in_graph[i]` is true exactly when utterance `i` currently has at least
/// one kept edge; those utterances form the labeled side of the split.
#[derive(Debug, Clone)]
pub struct SpeakerGraph {
    n: usize,
    edges: BTreeSet<Edge>,
    uf: UnionFind,
    in_graph: Vec<bool>,
}

impl SpeakerGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
            uf: UnionFind::new(n),
            in_graph: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn contains_edge(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    pub fn is_in_graph(&self, i: usize) -> bool {
        self.in_graph[i]
    }

    pub fn in_graph_count(&self) -> usize {
        self.in_graph.iter().filter(|b| **b).count()
    }

    /// Inserts an edge, joins the endpoints' components, and moves both
    /// endpoints into the graph. Returns false if the edge already existed.
    pub fn add_edge(&mut self, e: Edge) -> bool {
        if !self.edges.insert(e) {
            return false;
        }
        self.uf.union(e.a, e.b);
        self.in_graph[e.a] = true;
        self.in_graph[e.b] = true;
        true
    }

    /// Component representative of `i` (meaningful for in-graph nodes).
    pub fn root(&mut self, i: usize) -> usize {
        self.uf.find(i)
    }

    pub fn same_component(&mut self, i: usize, j: usize) -> bool {
        self.uf.find(i) == self.uf.find(j)
    }

    /// All in-graph members of the component rooted at `root`, ascending.
    pub fn members_of_root(&mut self, root: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..self.n {
            if self.in_graph[i] && self.uf.find(i) == root {
                out.push(i);
            }
        }
        out
    }

    /// Snapshot of the current components over in-graph nodes.
    pub fn connected_components(&mut self) -> ComponentView {
        let mut ids = vec![-1i64; self.n];
        let mut dense: std::collections::HashMap<usize, i64> = std::collections::HashMap::new();
        let mut count = 0i64;
        for (i, slot) in ids.iter_mut().enumerate() {
            if !self.in_graph[i] {
                continue;
            }
            let root = self.uf.find(i);
            *slot = *dense.entry(root).or_insert_with(|| {
                let id = count;
                count += 1;
                id
            });
        }
        ComponentView {
            ids,
            count: count as usize,
        }
    }

    /// Drops the given nodes: marks them out, removes their incident edges,
    /// and rebuilds the disjoint sets from the surviving edges.
    pub fn remove_nodes(&mut self, nodes: &[usize]) {
        if nodes.is_empty() {
            return;
        }
        for &i in nodes {
            self.in_graph[i] = false;
        }
        self.edges
            .retain(|e| !(nodes.contains(&e.a) || nodes.contains(&e.b)));
        // membership may have been stranded; recompute from edges
        let mut uf = UnionFind::new(self.n);
        let mut in_graph = vec![false; self.n];
        for e in &self.edges {
            uf.union(e.a, e.b);
            in_graph[e.a] = true;
            in_graph[e.b] = true;
        }
        self.uf = uf;
        self.in_graph = in_graph;
    }
}

/// Unions every pivot's voted edges into one graph.
pub fn aggregate(mips_per_pivot: &[Vec<Edge>], n: usize) -> SpeakerGraph {
    let mut g = SpeakerGraph::new(n);
    for edges in mips_per_pivot {
        for &e in edges {
            g.add_edge(e);
        }
    }
    g
}

/// Labels components of size ≥ `min_size`; smaller components are pruned
/// from the graph entirely, their members returning to the out set.
pub fn assign_initial_labels(mut g: SpeakerGraph, min_size: usize) -> (PseudoLabels, SpeakerGraph) {
    let view = g.connected_components();
    let mut sizes = vec![0usize; view.count];
    for &id in &view.ids {
        if id >= 0 {
            sizes[id as usize] += 1;
        }
    }
    let doomed: Vec<usize> = (0..g.len())
        .filter(|&i| view.ids[i] >= 0 && sizes[view.ids[i] as usize] < min_size)
        .collect();
    g.remove_nodes(&doomed);
    let view = g.connected_components();
    let labels = PseudoLabels::new(view.ids).expect("component ids are dense");
    (labels, g)
}
