//! Independent oracles and seeded micro-instance generators shared by the
//! integration tests and the acceptance runner.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use blowpack::candidacy::{EdgeSetLabelling, Label, PackingInstance, Slot, SlotSide};
use blowpack::generate::{generate, GeneratorSpec, GuestKind};
use blowpack::graph::{BipartitePair, Graph};
use blowpack::hypermatch::{Hypergraph, TupleWeight};
use blowpack::rng;
use blowpack::splitter::RefinedPartition;
use blowpack::testers::Weight;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_pair(a: usize, b: usize, p: f64, seed: u64) -> BipartitePair {
    let mut r = rng::rng(seed);
    let mut edges = Vec::new();
    for i in 0..a {
        for j in 0..b {
            if r.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    BipartitePair::from_local_edges(a, b, edges).unwrap()
}

pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut r = rng::rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

/// Straight enumeration of the definition: every subset pair above the size
/// threshold must have density within `d ± eps`.
pub fn regular_by_enumeration(pair: &BipartitePair, eps: f64, d: f64) -> bool {
    let (a, b) = (pair.left_len(), pair.right_len());
    let (ma, mb) = ((eps * a as f64 - 1e-9).ceil().max(1.0), (eps * b as f64 - 1e-9).ceil().max(1.0));
    for w1 in 1u32..1 << a {
        if (w1.count_ones() as f64) < ma {
            continue;
        }
        for w2 in 1u32..1 << b {
            if (w2.count_ones() as f64) < mb {
                continue;
            }
            let mut e = 0usize;
            for i in (0..a).filter(|i| w1 >> i & 1 == 1) {
                for j in (0..b).filter(|j| w2 >> j & 1 == 1) {
                    e += pair.has_edge(i, j) as usize;
                }
            }
            let area = (w1.count_ones() * w2.count_ones()) as f64;
            if (e as f64 / area - d).abs() > eps + 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Guests and their clusters `X_1..X_r` from the instance generator.
pub fn guest_collection(seed: u64, kind: GuestKind, n: usize, count: usize, max_degree: usize) -> (Vec<Graph>, Vec<Vec<Vec<usize>>>) {
    let spec = GeneratorSpec { n, r: 3, count, guest: kind, max_degree, ..GeneratorSpec::default() };
    let inst = generate(&spec, seed).unwrap().extended.unwrap();
    let clusters = inst.guest_partitions.iter().map(|p| p[1..].to_vec()).collect();
    (inst.guests, clusters)
}

/// Outcome of re-deriving the four split conditions from scratch.
#[derive(Debug)]
pub struct SplitAudit {
    pub independent: bool,
    pub balanced: bool,
    pub weight_deviation: f64,
    pub edge_deviation: f64,
}

fn close(h: &Graph, x: usize, y: usize) -> bool {
    h.has_edge(x, y) || h.neighbours(x).any(|z| h.has_edge(z, y))
}

/// `k` sub-clusters per cluster, sorted ascending by size. Edge targets use
/// ordered cluster pairs, so an edge inside a cluster counts twice.
pub fn audit_refinement(guests: &[Graph], clusters: &[Vec<Vec<usize>>], refined: &RefinedPartition, k: usize, weights: &[Weight]) -> SplitAudit {
    let beta = 1.0 / k as f64;
    let mut independent = true;
    let mut balanced = true;
    let mut wdev = 0.0f64;
    for (g, h) in guests.iter().enumerate() {
        for (i, subs) in refined.parts[g].iter().enumerate() {
            let mut all: Vec<usize> = subs.iter().flatten().copied().collect();
            all.sort_unstable();
            let mut want = clusters[g][i].clone();
            want.sort_unstable();
            let sizes: Vec<usize> = subs.iter().map(Vec::len).collect();
            let (lo, hi) = (sizes.iter().copied().min().unwrap_or(0), sizes.iter().copied().max().unwrap_or(0));
            balanced &= subs.len() == k && all == want && hi - lo <= 1 && sizes.windows(2).all(|w| w[0] <= w[1]);
            for sub in subs {
                for (a, &x) in sub.iter().enumerate() {
                    for &y in &sub[a + 1..] {
                        independent &= !close(h, x, y);
                    }
                }
                for w in weights {
                    let part: f64 = sub.iter().map(|&x| w.eval(guests, g, x)).sum();
                    let whole: f64 = clusters[g][i].iter().map(|&x| w.eval(guests, g, x)).sum();
                    wdev = wdev.max((part - beta * whole).abs());
                }
            }
        }
    }
    let r = clusters[0].len();
    let mut sub_count = vec![vec![0usize; r * k]; r * k];
    let mut cl_count = vec![vec![0usize; r]; r];
    for (g, h) in guests.iter().enumerate() {
        let mut at = vec![None; h.vertex_count()];
        for (i, subs) in refined.parts[g].iter().enumerate() {
            for (j, sub) in subs.iter().enumerate() {
                for &x in sub {
                    at[x] = Some((i, j));
                }
            }
        }
        for (x, y) in h.edges() {
            if let (Some((i, j)), Some((ip, jp))) = (at[x], at[y]) {
                let (a, b) = (i * k + j, ip * k + jp);
                sub_count[a.min(b)][a.max(b)] += 1;
                if i == ip {
                    cl_count[i][i] += 2;
                } else {
                    cl_count[i.min(ip)][i.max(ip)] += 1;
                }
            }
        }
    }
    let mut edev = 0.0f64;
    for i in 0..r {
        for ip in i..r {
            let target = beta * beta * cl_count[i][ip] as f64;
            for j in 0..k {
                for jp in 0..k {
                    let (a, b) = (i * k + j, ip * k + jp);
                    if a < b {
                        edev = edev.max((sub_count[a][b] as f64 - target).abs());
                    }
                }
            }
        }
    }
    SplitAudit { independent, balanced, weight_deviation: wdev, edge_deviation: edev }
}

/// Inputs of one candidacy update: guest vertices `xs` on the left, host
/// vertices `vs` on the right, and a partial embedding `sigma`.
pub struct UpdateCase {
    pub pair: BipartitePair,
    pub xs: Vec<usize>,
    pub vs: Vec<usize>,
    pub sigma: HashMap<usize, usize>,
    pub host: Graph,
    pub guest: Graph,
}

/// Every left vertex has at most one embedded guest neighbour. Guest
/// vertices `0..a` are the left side, `a..a+m` are embedded; host vertices
/// `0..m` carry the images and `m..m+b` are the right side.
pub fn update_case(seed: u64) -> UpdateCase {
    let mut r = rng::rng(seed);
    let (a, b, m) = (r.gen_range(1..=6), r.gen_range(1..=6), r.gen_range(1..=4));
    let pair = random_pair(a, b, 0.6, rng::derive(seed, &[1]));
    let mut guest = Graph::new(a + m + 2);
    for x in 0..a {
        if r.gen_bool(0.7) {
            guest.add_edge(x, a + r.gen_range(0..m)).unwrap();
        }
        // Unembedded neighbours never constrain anything.
        if r.gen_bool(0.3) {
            guest.add_edge(x, a + m + r.gen_range(0..2)).unwrap();
        }
    }
    let mut images: Vec<usize> = (0..m).collect();
    images.shuffle(&mut r);
    let sigma: HashMap<usize, usize> = (0..m).filter(|_| r.gen_bool(0.8)).map(|t| (a + t, images[t])).collect();
    let mut host = Graph::new(m + b);
    for u in 0..m {
        for v in m..m + b {
            if r.gen_bool(0.5) {
                host.add_edge(u, v).unwrap();
            }
        }
    }
    UpdateCase { pair, xs: (0..a).collect(), vs: (m..m + b).collect(), sigma, host, guest }
}

/// Recomputes the update from the definition: `xv` survives iff every
/// embedded guest neighbour `y` of `x` has `σ(y) v` in the host.
pub fn updated_by_definition(c: &UpdateCase) -> BipartitePair {
    let mut edges = Vec::new();
    for i in 0..c.pair.left_len() {
        for j in 0..c.pair.right_len() {
            if !c.pair.has_edge(i, j) {
                continue;
            }
            let ok = c
                .guest
                .edges()
                .into_iter()
                .filter_map(|(p, q)| if p == c.xs[i] { Some(q) } else if q == c.xs[i] { Some(p) } else { None })
                .filter_map(|y| c.sigma.get(&y))
                .all(|&u| c.host.has_edge(u, c.vs[j]));
            if ok {
                edges.push((i, j));
            }
        }
    }
    BipartitePair::from_local_edges(c.pair.left_len(), c.pair.right_len(), edges).unwrap()
}

/// A centre-only packing instance with at most 12 candidacy edges and a
/// random labelling: host-edge anchors outside the slot plus padding labels
/// shared across guests.
pub fn micro_packing(seed: u64) -> PackingInstance {
    let mut r = rng::rng(seed);
    let ng = r.gen_range(1..=3);
    let k = r.gen_range(2..=3);
    let host_ids: Vec<usize> = (0..k).collect();
    let nv = k + 6;
    let mut candidacy = Vec::new();
    let mut budget = 12usize;
    for _ in 0..ng {
        let mut p = BipartitePair::empty(k, k);
        for i in 0..k {
            for j in 0..k {
                if budget > 0 && r.gen_bool(0.55) {
                    p.add_edge(i, j);
                    budget -= 1;
                }
            }
        }
        candidacy.push(vec![p]);
    }
    let mut labelling = EdgeSetLabelling::new();
    let mut used: HashSet<(Label, usize)> = HashSet::new();
    for (g, per) in candidacy.iter().enumerate() {
        // Distinct anchors within a guest keep every label once per guest.
        let mut pool: Vec<usize> = (k..nv).collect();
        pool.shuffle(&mut r);
        for x in 0..k {
            if r.gen_bool(0.5) {
                let u = pool[x];
                labelling.push_anchor(g, x, u);
                for v in 0..k {
                    used.insert((Label::edge(u, v), g));
                }
            }
        }
        for (x, v) in per[0].edges() {
            if r.gen_bool(0.4) {
                let lab = Label::Artificial(v * 2 + r.gen_range(0..2));
                if used.insert((lab, g)) {
                    labelling.insert_extra(g, x, v, lab);
                }
            }
        }
    }
    let host = Graph::complete(nv);
    PackingInstance {
        guests: Arc::new(vec![Graph::new(k); ng]),
        host_a: Arc::new(host.clone()),
        host_b: Arc::new(host),
        slots: vec![Slot { side: SlotSide::Centre, cluster: 1, host: host_ids, guest_parts: vec![(0..k).collect(); ng], density: 1.0 }],
        reduced: Graph::new(1),
        candidacy,
        labelling,
        d_a: 1.0,
        d_b: 1.0,
        plus: vec![vec![Vec::new()]; ng],
    }
}

/// Conflict-free from the definition: per guest no repeated guest or host
/// vertex, and label sets pairwise disjoint across all chosen edges.
pub fn conflict_free_by_definition(l: &EdgeSetLabelling, chosen: &[[usize; 3]]) -> bool {
    let mut xs = HashSet::new();
    let mut vs = HashSet::new();
    let mut labels = HashSet::new();
    for &[g, x, v] in chosen {
        if !xs.insert((g, x)) || !vs.insert((g, v)) {
            return false;
        }
        for lab in l.labels(g, x, v) {
            if !labels.insert(lab) {
                return false;
            }
        }
    }
    true
}

/// Compares every subset of candidacy edges: hypergraph matching versus
/// conflict-free packing, plus the round trip through `to_packing`.
/// Returns (agreeing subsets, subsets).
pub fn aux_bijection(inst: &PackingInstance) -> (usize, usize) {
    let aux = blowpack::candidacy::build_aux_hypergraph(inst).unwrap();
    let m = aux.index.len();
    let mut agree = 0;
    for mask in 0u32..1 << m {
        let chosen: Vec<usize> = (0..m).filter(|e| mask >> e & 1 == 1).collect();
        let triples: Vec<[usize; 3]> = chosen.iter().map(|&e| aux.index[e]).collect();
        let matching = aux.hypergraph.is_matching(&chosen);
        let mut ok = matching == conflict_free_by_definition(&inst.labelling, &triples);
        if matching {
            let packing = aux.to_packing(&chosen, inst.guests.len());
            let back: BTreeSet<[usize; 3]> = packing.edges().into_iter().collect();
            ok &= packing.check(&inst.labelling).is_ok() && back == triples.iter().copied().collect();
        }
        agree += ok as usize;
    }
    (agree, 1 << m)
}

/// A union of `degree` random partitions of `n` vertices into triples:
/// `degree`-regular, with codegrees that stay small.
pub fn calibration_hypergraph(seed: u64, n: usize, degree: usize) -> Hypergraph {
    let mut r = rng::rng(seed);
    let mut edges = Vec::with_capacity(n / 3 * degree);
    let mut vs: Vec<usize> = (0..n).collect();
    for _ in 0..degree {
        vs.shuffle(&mut r);
        edges.extend(vs.chunks_exact(3).map(|c| c.to_vec()));
    }
    Hypergraph::new(3, n, edges).unwrap()
}

/// 1-tuple weights on random supports holding at least half the edges,
/// with values in [0.5, 1].
pub fn calibration_weights(h: &Hypergraph, seed: u64, count: usize) -> Vec<TupleWeight> {
    let mut r = rng::rng(seed);
    (0..count)
        .map(|_| {
            let keep = r.gen_range(0.5..=1.0);
            let mut values = Vec::new();
            for e in 0..h.edge_count() {
                if r.gen_bool(keep) {
                    values.push((e, r.gen_range(0.5..=1.0)));
                }
            }
            TupleWeight::edges(values)
        })
        .collect()
}

/// A random `k`-uniform hypergraph with at most 22 edges.
pub fn small_hypergraph(seed: u64) -> Hypergraph {
    let mut r = rng::rng(seed);
    let k = r.gen_range(2..=3);
    let n = r.gen_range(k + 1..=12);
    let m = r.gen_range(1..=22);
    let mut vs: Vec<usize> = (0..n).collect();
    let edges: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            vs.shuffle(&mut r);
            vs[..k].to_vec()
        })
        .collect();
    Hypergraph::new(k, n, edges).unwrap()
}
