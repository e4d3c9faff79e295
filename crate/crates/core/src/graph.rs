//! Simple undirected graphs and bipartite pairs backed by per-vertex bitsets.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Builds a bitset of the given length with the listed positions set.
pub fn bitset_of(len: usize, items: impl IntoIterator<Item = usize>) -> FixedBitSet {
    let mut s = FixedBitSet::with_capacity(len);
    for i in items {
        s.insert(i);
    }
    s
}

/// Undirected simple graph on vertices `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GraphJson", try_from = "GraphJson")]
pub struct Graph {
    adj: Vec<FixedBitSet>,
    edges: usize,
    labels: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl From<Graph> for GraphJson {
    fn from(g: Graph) -> Self {
        GraphJson {
            n: g.vertex_count(),
            edges: g.edges().into_iter().map(|(u, v)| [u, v]).collect(),
            labels: g.labels,
        }
    }
}

impl TryFrom<GraphJson> for Graph {
    type Error = Error;
    fn try_from(j: GraphJson) -> Result<Graph> {
        let mut g = Graph::from_edges(j.n, j.edges.iter().map(|e| (e[0], e[1])))?;
        if let Some(l) = &j.labels {
            if l.len() != j.n {
                return Err(Error::Format(format!(
                    "{} labels for {} vertices",
                    l.len(),
                    j.n
                )));
            }
        }
        g.labels = j.labels;
        Ok(g)
    }
}

impl Graph {
    pub fn new(n: usize) -> Graph {
        Graph {
            adj: (0..n).map(|_| FixedBitSet::with_capacity(n)).collect(),
            edges: 0,
            labels: None,
        }
    }

    /// Builds a graph from an edge list. Duplicate edges collapse; loops and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Graph> {
        let mut g = Graph::new(n);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Graph {
        let mut g = Graph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                g.insert_unchecked(u, v);
            }
        }
        g
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Vec<String>) -> Result<()> {
        if labels.len() != self.vertex_count() {
            return Err(Error::Domain("label count differs from vertex count".into()));
        }
        self.labels = Some(labels);
        Ok(())
    }

    fn check_pair(&self, u: usize, v: usize) -> Result<()> {
        let n = self.vertex_count();
        if u >= n || v >= n {
            return Err(Error::Domain(format!("edge ({u},{v}) outside 0..{n}")));
        }
        if u == v {
            return Err(Error::Domain(format!("self-loop at {u}")));
        }
        Ok(())
    }

    fn insert_unchecked(&mut self, u: usize, v: usize) -> bool {
        if self.adj[u].contains(v) {
            return false;
        }
        self.adj[u].insert(v);
        self.adj[v].insert(u);
        self.edges += 1;
        true
    }

    /// Adds `uv`; returns whether the edge is new.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<bool> {
        self.check_pair(u, v)?;
        Ok(self.insert_unchecked(u, v))
    }

    /// Removes `uv`; returns whether it was present.
    pub fn remove_edge(&mut self, u: usize, v: usize) -> bool {
        if u >= self.vertex_count() || v >= self.vertex_count() || !self.adj[u].contains(v) {
            return false;
        }
        self.adj[u].set(v, false);
        self.adj[v].set(u, false);
        self.edges -= 1;
        true
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.vertex_count() && v < self.vertex_count() && self.adj[u].contains(v)
    }

    pub fn neighbours(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[u].ones()
    }

    pub fn neighbour_set(&self, u: usize) -> &FixedBitSet {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].count_ones(..)
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count()).map(|u| self.degree(u)).max().unwrap_or(0)
    }

    /// Size of the common neighbourhood of `u` and `v`.
    pub fn codegree(&self, u: usize, v: usize) -> usize {
        self.adj[u].intersection_count(&self.adj[v])
    }

    /// Number of neighbours of `u` inside `set`.
    pub fn degree_into(&self, u: usize, set: &FixedBitSet) -> usize {
        self.adj[u].intersection_count(set)
    }

    /// All edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edges);
        for u in 0..self.vertex_count() {
            out.extend(self.adj[u].ones().filter(|&v| v > u).map(|v| (u, v)));
        }
        out
    }

    /// e(A, B): ordered pairs `(a, b)` in `A × B` that are adjacent.
    pub fn edges_between(&self, a: &[usize], b: &[usize]) -> usize {
        let bs = bitset_of(self.vertex_count(), b.iter().copied());
        a.iter().map(|&u| self.adj[u].intersection_count(&bs)).sum()
    }

    /// Subgraph induced on `keep`, relabelled to `0..keep.len()` in the given order.
    pub fn induced(&self, keep: &[usize]) -> Graph {
        let mut pos = vec![usize::MAX; self.vertex_count()];
        for (i, &v) in keep.iter().enumerate() {
            pos[v] = i;
        }
        let mut g = Graph::new(keep.len());
        for (i, &u) in keep.iter().enumerate() {
            for w in self.adj[u].ones() {
                let j = pos[w];
                if j != usize::MAX && j > i {
                    g.insert_unchecked(i, j);
                }
            }
        }
        g
    }

    /// The square: `uv` is an edge iff `u` and `v` are at distance 1 or 2.
    pub fn square(&self) -> Graph {
        let n = self.vertex_count();
        let mut g = self.clone();
        for w in 0..n {
            let nb: Vec<usize> = self.adj[w].ones().collect();
            for (i, &u) in nb.iter().enumerate() {
                for &v in &nb[i + 1..] {
                    g.insert_unchecked(u, v);
                }
            }
        }
        g.labels = None;
        g
    }

    /// `self − other` on the same vertex set.
    pub fn minus(&self, other: &Graph) -> Graph {
        let mut g = self.clone();
        for (u, v) in other.edges() {
            g.remove_edge(u, v);
        }
        g
    }

    /// True if no two vertices of `set` are adjacent.
    pub fn is_independent(&self, set: &[usize]) -> bool {
        let bs = bitset_of(self.vertex_count(), set.iter().copied());
        set.iter().all(|&u| self.adj[u].is_disjoint(&bs))
    }
}

/// Bipartite graph between two disjoint vertex sets, stored with local indices.
///
/// `left_ids` / `right_ids` remember which global vertices the local positions
/// stand for; all queries take local indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BipartitePair {
    left_ids: Vec<usize>,
    right_ids: Vec<usize>,
    left_adj: Vec<FixedBitSet>,
    right_adj: Vec<FixedBitSet>,
}

impl BipartitePair {
    /// Empty pair on `a` left and `b` right vertices with identity ids
    /// (`0..a` on the left and `a..a+b` on the right).
    pub fn empty(a: usize, b: usize) -> BipartitePair {
        BipartitePair {
            left_ids: (0..a).collect(),
            right_ids: (a..a + b).collect(),
            left_adj: (0..a).map(|_| FixedBitSet::with_capacity(b)).collect(),
            right_adj: (0..b).map(|_| FixedBitSet::with_capacity(a)).collect(),
        }
    }

    pub fn complete(a: usize, b: usize) -> BipartitePair {
        let mut p = BipartitePair::empty(a, b);
        for i in 0..a {
            for j in 0..b {
                p.add_edge(i, j);
            }
        }
        p
    }

    /// Pair on local vertex counts with the given local edges.
    pub fn from_local_edges(
        a: usize,
        b: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<BipartitePair> {
        let mut p = BipartitePair::empty(a, b);
        for (i, j) in edges {
            if i >= a || j >= b {
                return Err(Error::Domain(format!("pair edge ({i},{j}) outside {a}x{b}")));
            }
            p.add_edge(i, j);
        }
        Ok(p)
    }

    /// The bipartite subgraph `G[A, B]` with left side `a` and right side `b`.
    pub fn from_graph(g: &Graph, a: &[usize], b: &[usize]) -> Result<BipartitePair> {
        let bset = bitset_of(g.vertex_count(), b.iter().copied());
        if a.iter().any(|&u| bset.contains(u)) {
            return Err(Error::Domain("pair sides intersect".into()));
        }
        let mut p = BipartitePair::empty(a.len(), b.len());
        p.left_ids = a.to_vec();
        p.right_ids = b.to_vec();
        for (i, &u) in a.iter().enumerate() {
            for (j, &v) in b.iter().enumerate() {
                if g.has_edge(u, v) {
                    p.add_edge(i, j);
                }
            }
        }
        Ok(p)
    }

    pub fn with_ids(mut self, left: Vec<usize>, right: Vec<usize>) -> Result<BipartitePair> {
        if left.len() != self.left_len() || right.len() != self.right_len() {
            return Err(Error::Domain("id lists do not match pair sides".into()));
        }
        let rs = bitset_of(
            left.iter().chain(right.iter()).max().map_or(0, |m| m + 1),
            right.iter().copied(),
        );
        if left.iter().any(|&u| rs.contains(u)) {
            return Err(Error::Domain("pair sides intersect".into()));
        }
        self.left_ids = left;
        self.right_ids = right;
        Ok(self)
    }

    pub fn left_len(&self) -> usize {
        self.left_adj.len()
    }

    pub fn right_len(&self) -> usize {
        self.right_adj.len()
    }

    pub fn left_ids(&self) -> &[usize] {
        &self.left_ids
    }

    pub fn right_ids(&self) -> &[usize] {
        &self.right_ids
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        if self.left_adj[i].contains(j) {
            return false;
        }
        self.left_adj[i].insert(j);
        self.right_adj[j].insert(i);
        true
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        if !self.left_adj[i].contains(j) {
            return false;
        }
        self.left_adj[i].set(j, false);
        self.right_adj[j].set(i, false);
        true
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.left_adj[i].contains(j)
    }

    pub fn left_neighbours(&self, i: usize) -> &FixedBitSet {
        &self.left_adj[i]
    }

    pub fn right_neighbours(&self, j: usize) -> &FixedBitSet {
        &self.right_adj[j]
    }

    pub fn left_degree(&self, i: usize) -> usize {
        self.left_adj[i].count_ones(..)
    }

    pub fn right_degree(&self, j: usize) -> usize {
        self.right_adj[j].count_ones(..)
    }

    pub fn edge_count(&self) -> usize {
        self.left_adj.iter().map(|s| s.count_ones(..)).sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, s) in self.left_adj.iter().enumerate() {
            out.extend(s.ones().map(|j| (i, j)));
        }
        out
    }

    /// Swaps the roles of the two sides.
    pub fn transpose(&self) -> BipartitePair {
        BipartitePair {
            left_ids: self.right_ids.clone(),
            right_ids: self.left_ids.clone(),
            left_adj: self.right_adj.clone(),
            right_adj: self.left_adj.clone(),
        }
    }

    /// e(W1, W2) for local index sets.
    pub fn edges_between(&self, w1: &[usize], w2: &[usize]) -> usize {
        let s2 = bitset_of(self.right_len(), w2.iter().copied());
        w1.iter().map(|&i| self.left_adj[i].intersection_count(&s2)).sum()
    }

    /// Restriction to the listed local vertices, keeping their global ids.
    pub fn restrict(&self, keep_left: &[usize], keep_right: &[usize]) -> BipartitePair {
        let mut p = BipartitePair::empty(keep_left.len(), keep_right.len());
        p.left_ids = keep_left.iter().map(|&i| self.left_ids[i]).collect();
        p.right_ids = keep_right.iter().map(|&j| self.right_ids[j]).collect();
        for (a, &i) in keep_left.iter().enumerate() {
            for (b, &j) in keep_right.iter().enumerate() {
                if self.has_edge(i, j) {
                    p.add_edge(a, b);
                }
            }
        }
        p
    }
}

/// Edge density `e(W1, W2) / (|W1| |W2|)` of a pair between local index sets.
pub fn density(pair: &BipartitePair, w1: &[usize], w2: &[usize]) -> Result<f64> {
    if w1.is_empty() || w2.is_empty() {
        return Err(Error::Domain("density of an empty vertex set".into()));
    }
    if w1.iter().any(|&i| i >= pair.left_len()) || w2.iter().any(|&j| j >= pair.right_len()) {
        return Err(Error::Domain("density subset outside the pair".into()));
    }
    Ok(pair.edges_between(w1, w2) as f64 / (w1.len() * w2.len()) as f64)
}
