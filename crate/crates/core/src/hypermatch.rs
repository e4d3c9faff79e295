//! Uniform hypergraphs and a seeded nibble matcher whose output is audited
//! against registered tuple weights.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

/// A `k`-uniform hypergraph on `0..vertices`, stored flat (`k` ids per edge).
#[derive(Clone, Debug, PartialEq)]
pub struct Hypergraph {
    k: usize,
    vertices: usize,
    flat: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct HypergraphJson {
    k: usize,
    vertices: usize,
    edges: Vec<Vec<usize>>,
}

impl Serialize for Hypergraph {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HypergraphJson { k: self.k, vertices: self.vertices, edges: self.edges().map(|e| e.to_vec()).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Hypergraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = HypergraphJson::deserialize(d)?;
        Hypergraph::new(j.k, j.vertices, j.edges).map_err(serde::de::Error::custom)
    }
}

impl Hypergraph {
    /// Validates that every edge has exactly `k` distinct in-range vertices.
    pub fn new(k: usize, vertices: usize, edges: impl IntoIterator<Item = Vec<usize>>) -> Result<Hypergraph> {
        let mut h = Hypergraph { k, vertices, flat: Vec::new() };
        for e in edges {
            h.push_edge(&e)?;
        }
        Ok(h)
    }

    pub fn with_capacity(k: usize, vertices: usize, edges: usize) -> Hypergraph {
        Hypergraph { k, vertices, flat: Vec::with_capacity(k * edges) }
    }

    pub fn push_edge(&mut self, e: &[usize]) -> Result<usize> {
        if e.len() != self.k {
            return Err(Error::Structure(format!("edge {e:?} has {} vertices, expected {}", e.len(), self.k)));
        }
        for (i, &v) in e.iter().enumerate() {
            if v >= self.vertices {
                return Err(Error::Structure(format!("edge {e:?}: vertex {v} out of range")));
            }
            if e[..i].contains(&v) {
                return Err(Error::Structure(format!("edge {e:?} repeats vertex {v}")));
            }
        }
        self.flat.extend_from_slice(e);
        Ok(self.edge_count() - 1)
    }

    pub fn uniformity(&self) -> usize {
        self.k
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn edge_count(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.flat.len() / self.k
        }
    }

    pub fn edge(&self, i: usize) -> &[usize] {
        &self.flat[i * self.k..(i + 1) * self.k]
    }

    pub fn edges(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.flat.chunks_exact(self.k.max(1))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.vertices];
        for &v in &self.flat {
            deg[v] += 1;
        }
        deg
    }

    /// Compressed incidence lists: `(offsets, edge ids)`.
    pub fn incidence(&self) -> (Vec<usize>, Vec<usize>) {
        let deg = self.degrees();
        let mut off = vec![0usize; self.vertices + 1];
        for v in 0..self.vertices {
            off[v + 1] = off[v] + deg[v];
        }
        let mut fill = off.clone();
        let mut inc = vec![0usize; self.flat.len()];
        for (i, e) in self.edges().enumerate() {
            for &v in e {
                inc[fill[v]] = i;
                fill[v] += 1;
            }
        }
        (off, inc)
    }

    pub fn disjoint(&self, a: usize, b: usize) -> bool {
        let eb = self.edge(b);
        self.edge(a).iter().all(|v| !eb.contains(v))
    }

    pub fn is_matching(&self, edges: &[usize]) -> bool {
        let mut seen = std::collections::HashSet::new();
        edges.iter().all(|&i| self.edge(i).iter().all(|&v| seen.insert(v)))
    }
}

pub fn max_degree(h: &Hypergraph) -> usize {
    h.degrees().into_iter().max().unwrap_or(0)
}

/// Largest number of edges containing a fixed pair of vertices.
pub fn max_codegree(h: &Hypergraph) -> usize {
    let (off, inc) = h.incidence();
    let mut best = 0;
    let mut count: HashMap<usize, usize> = HashMap::new();
    for u in 0..h.vertex_count() {
        count.clear();
        for &e in &inc[off[u]..off[u + 1]] {
            for &w in h.edge(e) {
                if w > u {
                    let c = count.entry(w).or_insert(0);
                    *c += 1;
                    best = best.max(*c);
                }
            }
        }
    }
    best
}

/// A weight on `ℓ`-sets of edges. Every variant evaluates to 0 on tuples
/// that are not matchings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TupleWeight {
    /// `ℓ = 1`: explicit `(edge, value)` entries, zero elsewhere.
    Edges { values: Vec<(usize, f64)>, cap: f64 },
    /// Weight 1 on every tuple taking one edge from each list of a single
    /// centre. Aggregates multiply list sizes per centre, so tuples whose
    /// edges overlap are counted by the aggregate but evaluate to 0.
    StarProduct { centres: Vec<Vec<Vec<usize>>> },
    /// Small explicit support: `(sorted tuple, value)`.
    Table { arity: usize, entries: Vec<(Vec<usize>, f64)>, cap: f64 },
}

impl TupleWeight {
    pub fn edges(values: Vec<(usize, f64)>) -> TupleWeight {
        let cap = values.iter().map(|&(_, w)| w).fold(0.0, f64::max);
        TupleWeight::Edges { values, cap }
    }

    pub fn uniform(h: &Hypergraph, value: f64) -> TupleWeight {
        TupleWeight::edges((0..h.edge_count()).map(|i| (i, value)).collect())
    }

    pub fn arity(&self) -> usize {
        match self {
            TupleWeight::Edges { .. } => 1,
            TupleWeight::StarProduct { centres } => centres.iter().map(|c| c.len()).max().unwrap_or(0),
            TupleWeight::Table { arity, .. } => *arity,
        }
    }

    /// `ω(T)` for one tuple of edge indices.
    pub fn eval(&self, h: &Hypergraph, tuple: &[usize]) -> f64 {
        if !h.is_matching(tuple) {
            return 0.0;
        }
        match self {
            TupleWeight::Edges { values, .. } => {
                if tuple.len() != 1 {
                    return 0.0;
                }
                values.iter().filter(|&&(e, _)| e == tuple[0]).map(|&(_, w)| w).sum()
            }
            TupleWeight::StarProduct { centres } => {
                let hits = centres.iter().filter(|lists| {
                    lists.len() == tuple.len()
                        && lists.iter().all(|l| tuple.iter().filter(|t| l.contains(t)).count() == 1)
                        && tuple.iter().all(|t| lists.iter().filter(|l| l.contains(t)).count() == 1)
                });
                hits.count() as f64
            }
            TupleWeight::Table { entries, .. } => {
                let mut t = tuple.to_vec();
                t.sort_unstable();
                entries.iter().filter(|(k, _)| *k == t).map(|(_, w)| w).sum()
            }
        }
    }

    /// `ω(E)`: total over all `ℓ`-sets (aggregate form for star products).
    pub fn total(&self) -> f64 {
        match self {
            TupleWeight::Edges { values, .. } => values.iter().map(|&(_, w)| w).sum(),
            TupleWeight::StarProduct { centres } => centres
                .iter()
                .map(|lists| lists.iter().map(|l| l.len() as f64).product::<f64>())
                .sum(),
            TupleWeight::Table { entries, .. } => entries.iter().map(|(_, w)| w).sum(),
        }
    }

    /// `ω(M)`: total over the `ℓ`-subsets of a matching.
    pub fn on_matching(&self, h: &Hypergraph, matching: &[usize]) -> f64 {
        let mut inm = vec![false; h.edge_count()];
        for &e in matching {
            inm[e] = true;
        }
        match self {
            TupleWeight::Edges { values, .. } => values.iter().filter(|&&(e, _)| inm[e]).map(|&(_, w)| w).sum(),
            TupleWeight::StarProduct { centres } => centres
                .iter()
                .map(|lists| {
                    lists
                        .iter()
                        .map(|l| l.iter().filter(|&&e| inm[e]).count() as f64)
                        .product::<f64>()
                })
                .sum(),
            TupleWeight::Table { entries, .. } => entries
                .iter()
                .filter(|(t, _)| t.iter().all(|&e| inm[e]))
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// Adds a constant to every edge so the total mass reaches `target`.
    /// Only 1-tuple weights can be padded; others are returned unchanged.
    pub fn padded_to(&self, h: &Hypergraph, target: f64) -> (TupleWeight, bool) {
        let total = self.total();
        match self {
            TupleWeight::Edges { values, cap } if total < target && h.edge_count() > 0 => {
                let add = (target - total) / h.edge_count() as f64;
                let mut dense = vec![0.0; h.edge_count()];
                for &(e, w) in values {
                    dense[e] += w;
                }
                let values: Vec<(usize, f64)> = dense.into_iter().enumerate().map(|(e, w)| (e, w + add)).collect();
                (TupleWeight::Edges { values, cap: cap + add }, true)
            }
            _ => (self.clone(), false),
        }
    }

    /// Checks the declared cap and cleanliness on a sample of the support.
    pub fn spot_check(&self, h: &Hypergraph, seed: u64, samples: usize) -> Result<()> {
        match self {
            TupleWeight::Edges { values, cap } => {
                for &(e, w) in values {
                    if e >= h.edge_count() {
                        return Err(Error::Weight(format!("weight references missing edge {e}")));
                    }
                    if w < 0.0 || w > cap + 1e-9 {
                        return Err(Error::Weight(format!("value {w} on edge {e} outside [0, {cap}]")));
                    }
                }
                Ok(())
            }
            TupleWeight::StarProduct { centres } => {
                let mut r = rng::rng(seed);
                for _ in 0..samples.min(centres.len() * 4) {
                    let lists = &centres[r.gen_range(0..centres.len())];
                    if lists.iter().any(|l| l.is_empty()) {
                        continue;
                    }
                    let t: Vec<usize> = lists.iter().map(|l| l[r.gen_range(0..l.len())]).collect();
                    if t.iter().any(|&e| e >= h.edge_count()) {
                        return Err(Error::Weight(format!("tuple {t:?} references a missing edge")));
                    }
                    if !h.is_matching(&t) && self.eval(h, &t) != 0.0 {
                        return Err(Error::Weight(format!("tuple {t:?} is not a matching but has positive weight")));
                    }
                }
                Ok(())
            }
            TupleWeight::Table { arity, entries, cap } => {
                for (t, w) in entries {
                    if t.len() != *arity || t.iter().any(|&e| e >= h.edge_count()) {
                        return Err(Error::Weight(format!("tuple {t:?} malformed for arity {arity}")));
                    }
                    if *w < 0.0 || *w > cap + 1e-9 {
                        return Err(Error::Weight(format!("value {w} on tuple {t:?} outside [0, {cap}]")));
                    }
                    if *w > 0.0 && !h.is_matching(t) {
                        return Err(Error::Weight(format!("tuple {t:?} is not a matching but has weight {w}")));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub bite_fraction: f64,
    /// Defaults to `⌈ln Δ⌉ · 10`.
    pub rounds: Option<usize>,
    pub seed: u64,
    /// Run the swap-based improvement pass after the greedy completion.
    pub improve: bool,
}

impl MatchParams {
    pub fn new(seed: u64) -> MatchParams {
        MatchParams { bite_fraction: 0.1, rounds: None, seed, improve: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub arity: usize,
    pub total: f64,
    /// `Δ^ℓ`.
    pub delta_power: f64,
    pub on_matching: f64,
    /// `ω(M) Δ^ℓ / ω(E)`, 1 when the weight is identically zero.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport {
    pub matching: Vec<usize>,
    pub weights: Vec<WeightRow>,
    pub max_degree: usize,
    pub max_codegree: usize,
    pub edge_count: usize,
    pub weight_count: usize,
    /// Live vertex count after each nibble round.
    pub nibble_alive: Vec<usize>,
    pub nibble_picked: usize,
    pub greedy_picked: usize,
    pub improvements: usize,
}

struct State<'a> {
    h: &'a Hypergraph,
    off: Vec<usize>,
    inc: Vec<usize>,
    /// Matched edge covering each vertex.
    owner: Vec<usize>,
    matching: Vec<usize>,
}

const FREE: usize = usize::MAX;

impl State<'_> {
    fn is_free(&self, e: usize) -> bool {
        self.h.edge(e).iter().all(|&v| self.owner[v] == FREE)
    }

    fn take(&mut self, e: usize) {
        for &v in self.h.edge(e) {
            self.owner[v] = e;
        }
        self.matching.push(e);
    }

    fn drop_edge(&mut self, e: usize) {
        for &v in self.h.edge(e) {
            self.owner[v] = FREE;
        }
        self.matching.retain(|&m| m != e);
    }

    /// Matched edges blocking `e`, deduplicated.
    fn blockers(&self, e: usize, out: &mut Vec<usize>) {
        out.clear();
        for &v in self.h.edge(e) {
            let o = self.owner[v];
            if o != FREE && !out.contains(&o) {
                out.push(o);
            }
        }
    }

    fn greedy(&mut self, r: &mut rng::Rng) -> usize {
        let mut order: Vec<usize> = (0..self.h.edge_count()).filter(|&e| self.is_free(e)).collect();
        order.shuffle(r);
        let before = self.matching.len();
        for e in order {
            if self.is_free(e) {
                self.take(e);
            }
        }
        self.matching.len() - before
    }

    /// Replaces `t` matched edges by `t + 1` edges they alone block, for
    /// `t = 1` always and `t = 2, 3, 4` on small matchings.
    fn improve(&mut self, r: &mut rng::Rng) -> usize {
        const LIMITS: [usize; 4] = [usize::MAX, 48, 24, 12];
        let mut gains = 0;
        let mut blk = Vec::new();
        for (t, &limit) in (1..=LIMITS.len()).zip(&LIMITS) {
            if self.matching.len() > limit {
                break;
            }
            let mut progress = true;
            let mut passes = 0;
            while progress && passes < 8 {
                progress = false;
                passes += 1;
                // Unmatched edges grouped by the (sorted) set of blockers.
                let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
                for e in 0..self.h.edge_count() {
                    if self.owner[self.h.edge(e)[0]] == e {
                        continue;
                    }
                    self.blockers(e, &mut blk);
                    if blk.is_empty() || blk.len() > t {
                        continue;
                    }
                    blk.sort_unstable();
                    groups.entry(blk.clone()).or_default().push(e);
                }
                let mut keys = subsets(&self.matching, t);
                for k in &mut keys {
                    k.sort_unstable();
                }
                keys.shuffle(r);
                for key in keys {
                    if key.iter().any(|&m| !self.matching.contains(&m)) {
                        continue;
                    }
                    // Candidates: edges whose blockers form a subset of `key`.
                    let mut cand: Vec<usize> = Vec::new();
                    for (g, es) in &groups {
                        if g.iter().all(|b| key.contains(b)) {
                            cand.extend(es.iter().copied().filter(|&e| {
                                self.h.edge(e).iter().all(|&v| self.owner[v] == FREE || key.contains(&self.owner[v]))
                            }));
                        }
                    }
                    if cand.len() < t + 1 {
                        continue;
                    }
                    cand.sort_unstable();
                    cand.dedup();
                    if let Some(pick) = disjoint_subset(self.h, &cand, t + 1) {
                        for &m in &key {
                            self.drop_edge(m);
                        }
                        for e in pick {
                            self.take(e);
                        }
                        gains += 1;
                        progress = true;
                    }
                }
            }
        }
        gains
    }
}

/// All `t`-element subsets of `items`, in lexicographic position order.
fn subsets(items: &[usize], t: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], t: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == t {
            out.push(cur.clone());
            return;
        }
        for i in from..items.len() {
            cur.push(items[i]);
            go(items, t, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, t, 0, &mut Vec::new(), &mut out);
    out
}

/// First `size` pairwise disjoint edges among `cand` (depth-first, bounded).
fn disjoint_subset(h: &Hypergraph, cand: &[usize], size: usize) -> Option<Vec<usize>> {
    fn go(h: &Hypergraph, cand: &[usize], from: usize, size: usize, cur: &mut Vec<usize>, budget: &mut usize) -> bool {
        if cur.len() == size {
            return true;
        }
        for i in from..cand.len() {
            if *budget == 0 {
                return false;
            }
            *budget -= 1;
            if cur.iter().all(|&c| h.disjoint(c, cand[i])) {
                cur.push(cand[i]);
                if go(h, cand, i + 1, size, cur, budget) {
                    return true;
                }
                cur.pop();
            }
        }
        false
    }
    let mut cur = Vec::new();
    let mut budget = 20_000;
    go(h, cand, 0, size, &mut cur, &mut budget).then_some(cur)
}

/// Semi-random nibble followed by randomized greedy completion (and an
/// optional swap improvement). The weights are only audited, never steered.
pub fn find_matching(h: &Hypergraph, weights: &[TupleWeight], params: &MatchParams) -> Result<MatchingReport> {
    if h.edge_count() == 0 {
        return Err(Error::Domain("hypergraph has no edges".into()));
    }
    if !(params.bite_fraction > 0.0 && params.bite_fraction <= 1.0) {
        return Err(Error::Config(format!("bite fraction {} not in (0,1]", params.bite_fraction)));
    }
    for (i, w) in weights.iter().enumerate() {
        w.spot_check(h, rng::derive(params.seed, &[0x5EED, i as u64]), 64)?;
    }
    let (off, inc) = h.incidence();
    let delta = (0..h.vertex_count()).map(|v| off[v + 1] - off[v]).max().unwrap_or(0);
    let rounds = params.rounds.unwrap_or(((delta.max(2) as f64).ln().ceil() as usize) * 10);
    let mut st = State { h, off, inc, owner: vec![FREE; h.vertex_count()], matching: Vec::new() };
    let mut r = rng::rng(params.seed);

    let mut alive_edge: Vec<bool> = vec![true; h.edge_count()];
    let mut alive_deg: Vec<usize> = (0..h.vertex_count()).map(|v| st.off[v + 1] - st.off[v]).collect();
    let mut alive_vertices = alive_deg.iter().filter(|&&d| d > 0).count();
    let mut nibble_alive = Vec::new();
    let mut hits = vec![0u32; h.vertex_count()];
    for _ in 0..rounds {
        let dcur = alive_deg.iter().copied().max().unwrap_or(0);
        if dcur == 0 {
            break;
        }
        let p = params.bite_fraction / dcur as f64;
        let picks: Vec<usize> = (0..h.edge_count()).filter(|&e| alive_edge[e] && r.gen::<f64>() < p).collect();
        for &e in &picks {
            for &v in h.edge(e) {
                hits[v] += 1;
            }
        }
        let kept: Vec<usize> = picks.iter().copied().filter(|&e| h.edge(e).iter().all(|&v| hits[v] == 1)).collect();
        for &e in &picks {
            for &v in h.edge(e) {
                hits[v] = 0;
            }
        }
        for &e in &kept {
            st.take(e);
            for &v in h.edge(e) {
                if alive_deg[v] > 0 {
                    alive_vertices -= 1;
                }
                for &f in &st.inc[st.off[v]..st.off[v + 1]] {
                    if alive_edge[f] {
                        alive_edge[f] = false;
                        for &w in h.edge(f) {
                            alive_deg[w] -= 1;
                            if alive_deg[w] == 0 && st.owner[w] == FREE {
                                alive_vertices -= 1;
                            }
                        }
                    }
                }
            }
        }
        nibble_alive.push(alive_vertices);
    }
    let nibble_picked = st.matching.len();
    let greedy_picked = st.greedy(&mut r);
    let improvements = if params.improve {
        let g = st.improve(&mut r);
        st.greedy(&mut r);
        g
    } else {
        0
    };
    let mut matching = st.matching.clone();
    matching.sort_unstable();
    if !h.is_matching(&matching) {
        return Err(Error::Structure("matcher produced intersecting edges".into()));
    }
    if let Some(e) = (0..h.edge_count()).find(|&e| st.is_free(e)) {
        return Err(Error::Structure(format!("matching is not maximal: edge {e} is free")));
    }
    let rows = weights
        .iter()
        .map(|w| {
            let l = w.arity();
            let total = w.total();
            let delta_power = (delta as f64).powi(l as i32);
            let on = w.on_matching(h, &matching);
            let ratio = if total > 0.0 { on * delta_power / total } else { 1.0 };
            WeightRow { arity: l, total, delta_power, on_matching: on, ratio }
        })
        .collect();
    Ok(MatchingReport {
        matching,
        weights: rows,
        max_degree: delta,
        max_codegree: max_codegree(h),
        edge_count: h.edge_count(),
        weight_count: weights.len(),
        nibble_alive,
        nibble_picked,
        greedy_picked,
        improvements,
    })
}

/// Largest-weight matching by exhaustive search; ties go to the larger
/// matching, then to the lexicographically first. Test oracle only.
pub fn brute_force_best_matching(h: &Hypergraph, weight: &TupleWeight) -> Result<Vec<usize>> {
    const LIMIT: usize = 22;
    if h.edge_count() > LIMIT {
        return Err(Error::Size(format!("{} edges exceed the brute-force limit {LIMIT}", h.edge_count())));
    }
    let m = h.edge_count();
    let conflict: Vec<u32> = (0..m)
        .map(|a| (0..m).filter(|&b| b != a && !h.disjoint(a, b)).fold(0u32, |acc, b| acc | 1 << b))
        .collect();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    fn go(
        i: usize,
        m: usize,
        blocked: u32,
        cur: &mut Vec<usize>,
        conflict: &[u32],
        h: &Hypergraph,
        w: &TupleWeight,
        best: &mut Option<(f64, usize, Vec<usize>)>,
    ) {
        if i == m {
            let val = w.on_matching(h, cur);
            let better = match best {
                None => true,
                Some((bv, bl, _)) => val > *bv + 1e-12 || ((val - *bv).abs() <= 1e-12 && cur.len() > *bl),
            };
            if better {
                *best = Some((val, cur.len(), cur.clone()));
            }
            return;
        }
        if blocked >> i & 1 == 0 {
            cur.push(i);
            go(i + 1, m, blocked | conflict[i], cur, conflict, h, w, best);
            cur.pop();
        }
        go(i + 1, m, blocked, cur, conflict, h, w, best);
    }
    go(0, m, 0, &mut Vec::new(), &conflict, h, weight, &mut best);
    Ok(best.map(|b| b.2).unwrap_or_default())
}
