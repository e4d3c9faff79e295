//! Regularity, super-regularity, typicality and related verification routines.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bitset_of, BipartitePair, Graph};
use crate::rng;

/// Largest `|A| + |B|` for which exhaustive enumeration is permitted.
pub const EXHAUSTIVE_LIMIT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictMode {
    Exhaustive,
    CodegreeCertificate,
    WitnessSearch,
}

/// How a regularity verdict is to be obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Method {
    Exhaustive,
    /// Pair-codegree certificate. `gamma` bounds the admissible side ratio.
    CodegreeCertificate { gamma: f64 },
    /// Seeded randomized search for a violating subset pair.
    WitnessSearch { seed: u64, trials: usize },
}

impl Method {
    pub fn mode(&self) -> VerdictMode {
        match self {
            Method::Exhaustive => VerdictMode::Exhaustive,
            Method::CodegreeCertificate { .. } => VerdictMode::CodegreeCertificate,
            Method::WitnessSearch { .. } => VerdictMode::WitnessSearch,
        }
    }

    pub fn certificate() -> Method {
        Method::CodegreeCertificate { gamma: 0.25 }
    }

    /// Exhaustive when the pair is small enough, certificate otherwise.
    pub fn auto(total: usize) -> Method {
        if total <= EXHAUSTIVE_LIMIT {
            Method::Exhaustive
        } else {
            Method::certificate()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// A subset pair whose density leaves the window.
    Subsets {
        left: Vec<usize>,
        right: Vec<usize>,
        density: f64,
    },
    /// A vertex whose degree leaves the window.
    Vertex {
        side: Side,
        vertex: usize,
        degree: usize,
        low: f64,
        high: f64,
    },
    /// A vertex set whose common neighbourhood has the wrong size.
    CommonNeighbourhood {
        set: Vec<usize>,
        size: usize,
        low: f64,
        high: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityVerdict {
    pub accepted: bool,
    pub mode: VerdictMode,
    pub witness: Option<Witness>,
    pub epsilon_used: f64,
    pub d_used: f64,
    /// For the certificate mode: the regularity parameter actually certified.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified_epsilon: Option<f64>,
    /// For the certificate mode: qualifying pairs and the required count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qualifying_pairs: Option<(u64, f64)>,
}

impl RegularityVerdict {
    fn new(accepted: bool, mode: VerdictMode, eps: f64, d: f64) -> Self {
        RegularityVerdict {
            accepted,
            mode,
            witness: None,
            epsilon_used: eps,
            d_used: d,
            certified_epsilon: None,
            qualifying_pairs: None,
        }
    }

    fn reject(mode: VerdictMode, eps: f64, d: f64, w: Witness) -> Self {
        let mut v = Self::new(false, mode, eps, d);
        v.witness = Some(w);
        v
    }
}

fn check_params(eps: f64, d: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("epsilon {eps} not in (0,1)")));
    }
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Domain(format!("density {d} not in [0,1]")));
    }
    Ok(())
}

/// Smallest admissible subset size `⌈eps·len⌉` (at least 1).
pub fn min_subset(eps: f64, len: usize) -> usize {
    ((eps * len as f64) - 1e-9).ceil().max(1.0) as usize
}

/// True when `edges / (s1 s2)` lies in `d ± eps`.
fn in_window(edges: usize, s1: usize, s2: usize, eps: f64, d: f64) -> bool {
    let area = (s1 * s2) as f64;
    (edges as f64 - d * area).abs() <= eps * area + 1e-9
}

fn mask_members(mask: u32, ids: usize) -> Vec<usize> {
    (0..ids).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Exhaustive scan over all admissible subset pairs. Returns the worst
/// violation (largest deviation, then lowest density, then first in mask order).
fn exhaustive_scan(pair: &BipartitePair, eps: f64, d: f64) -> Option<Witness> {
    let (a, b) = (pair.left_len(), pair.right_len());
    let m1 = min_subset(eps, a);
    let m2 = min_subset(eps, b);
    let right_masks: Vec<u32> = (0..b)
        .map(|j| pair.right_neighbours(j).ones().fold(0u32, |m, i| m | 1 << i))
        .collect();
    let mut sums = vec![0usize; 1 << b];
    let mut best: Option<(f64, f64, u32, u32)> = None;
    for w1 in 1u32..(1u32 << a) {
        let s1 = w1.count_ones() as usize;
        if s1 < m1 {
            continue;
        }
        let c: Vec<usize> = right_masks
            .iter()
            .map(|&m| (m & w1).count_ones() as usize)
            .collect();
        for w2 in 1u32..(1u32 << b) {
            let low = w2.trailing_zeros() as usize;
            sums[w2 as usize] = sums[(w2 & (w2 - 1)) as usize] + c[low];
            let s2 = w2.count_ones() as usize;
            if s2 < m2 || in_window(sums[w2 as usize], s1, s2, eps, d) {
                continue;
            }
            let dens = sums[w2 as usize] as f64 / (s1 * s2) as f64;
            let dev = (dens - d).abs();
            let better = match best {
                None => true,
                Some((bd, bdens, _, _)) => {
                    dev > bd + 1e-12 || ((dev - bd).abs() <= 1e-12 && dens < bdens - 1e-12)
                }
            };
            if better {
                best = Some((dev, dens, w1, w2));
            }
        }
    }
    best.map(|(_, dens, w1, w2)| Witness::Subsets {
        left: mask_members(w1, a),
        right: mask_members(w2, b),
        density: dens,
    })
}

fn certificate(pair: &BipartitePair, eps: f64, d: f64, gamma: f64) -> Result<RegularityVerdict> {
    let (a, b) = (pair.left_len(), pair.right_len());
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("certificate gamma {gamma} not in (0,1]")));
    }
    let (af, bf) = (a as f64, b as f64);
    if bf < gamma * af - 1e-9 || bf > af / gamma + 1e-9 {
        return Err(Error::Domain(format!(
            "certificate refused: |B|={b} outside [{gamma}·{a}, {a}/{gamma}]"
        )));
    }
    let deg_ok: Vec<bool> = (0..a)
        .map(|u| pair.left_degree(u) as f64 >= (d - eps) * bf - 1e-9)
        .collect();
    let codeg_cap = (d + eps) * (d + eps) * bf + 1e-9;
    let qualifying: u64 = (0..a)
        .into_par_iter()
        .map(|u| {
            if !deg_ok[u] {
                return 0u64;
            }
            let nu = pair.left_neighbours(u);
            (u + 1..a)
                .filter(|&v| {
                    deg_ok[v] && (nu.intersection_count(pair.left_neighbours(v)) as f64) <= codeg_cap
                })
                .count() as u64
        })
        .sum();
    let needed = (1.0 - 5.0 * eps) * af * af / 2.0;
    let mut v = RegularityVerdict::new(
        qualifying as f64 >= needed - 1e-9,
        VerdictMode::CodegreeCertificate,
        eps,
        d,
    );
    v.certified_epsilon = Some(eps.powf(1.0 / 6.0));
    v.qualifying_pairs = Some((qualifying, needed));
    Ok(v)
}

fn degree_order(degrees: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..degrees.len()).collect();
    idx.sort_by_key(|&i| (degrees[i], i));
    idx
}

fn witness_search(pair: &BipartitePair, eps: f64, d: f64, seed: u64, trials: usize) -> Option<Witness> {
    let (a, b) = (pair.left_len(), pair.right_len());
    if a == 0 || b == 0 {
        return None;
    }
    let m1 = min_subset(eps, a);
    let m2 = min_subset(eps, b);
    let check = |w1: &[usize], w2: &[usize]| -> Option<Witness> {
        let e = pair.edges_between(w1, w2);
        if in_window(e, w1.len(), w2.len(), eps, d) {
            None
        } else {
            let mut left = w1.to_vec();
            let mut right = w2.to_vec();
            left.sort_unstable();
            right.sort_unstable();
            Some(Witness::Subsets {
                left,
                right,
                density: e as f64 / (w1.len() * w2.len()) as f64,
            })
        }
    };
    // Given one side, the extreme-degree vertices on the other side are the
    // strongest candidates for a violation.
    let extremes_left = |w2: &[usize]| -> [Vec<usize>; 2] {
        let s = bitset_of(b, w2.iter().copied());
        let degs: Vec<usize> = (0..a).map(|i| pair.left_neighbours(i).intersection_count(&s)).collect();
        let ord = degree_order(&degs);
        [ord[..m1].to_vec(), ord[a - m1..].to_vec()]
    };
    let extremes_right = |w1: &[usize]| -> [Vec<usize>; 2] {
        let s = bitset_of(a, w1.iter().copied());
        let degs: Vec<usize> = (0..b).map(|j| pair.right_neighbours(j).intersection_count(&s)).collect();
        let ord = degree_order(&degs);
        [ord[..m2].to_vec(), ord[b - m2..].to_vec()]
    };
    let full_a: Vec<usize> = (0..a).collect();
    let full_b: Vec<usize> = (0..b).collect();
    if let Some(w) = check(&full_a, &full_b) {
        return Some(w);
    }
    for w1 in extremes_left(&full_b) {
        if let Some(w) = check(&w1, &full_b) {
            return Some(w);
        }
        for w2 in extremes_right(&w1) {
            if let Some(w) = check(&w1, &w2) {
                return Some(w);
            }
        }
    }
    let mut rng = rng::rng(seed);
    for _ in 0..trials {
        let s2 = rng.gen_range(m2..=b);
        let mut w2 = full_b.clone();
        w2.shuffle(&mut rng);
        w2.truncate(s2);
        for w1 in extremes_left(&w2) {
            if let Some(w) = check(&w1, &w2) {
                return Some(w);
            }
            for w2b in extremes_right(&w1) {
                if let Some(w) = check(&w1, &w2b) {
                    return Some(w);
                }
            }
        }
    }
    None
}

/// Decides (or certifies, or searches for a counterexample to) whether the
/// pair is `(eps, d)`-regular: every `W1 ⊆ A`, `W2 ⊆ B` with
/// `|Wi| ≥ eps|side|` has density `d ± eps`.
pub fn regularity_verdict(pair: &BipartitePair, eps: f64, d: f64, method: Method) -> Result<RegularityVerdict> {
    check_params(eps, d)?;
    match method {
        Method::Exhaustive => {
            let total = pair.left_len() + pair.right_len();
            if total > EXHAUSTIVE_LIMIT {
                return Err(Error::Size(format!(
                    "exhaustive verdict on {total} vertices (limit {EXHAUSTIVE_LIMIT})"
                )));
            }
            Ok(match exhaustive_scan(pair, eps, d) {
                None => RegularityVerdict::new(true, VerdictMode::Exhaustive, eps, d),
                Some(w) => RegularityVerdict::reject(VerdictMode::Exhaustive, eps, d, w),
            })
        }
        Method::CodegreeCertificate { gamma } => certificate(pair, eps, d, gamma),
        Method::WitnessSearch { seed, trials } => Ok(match witness_search(pair, eps, d, seed, trials) {
            None => RegularityVerdict::new(true, VerdictMode::WitnessSearch, eps, d),
            Some(w) => RegularityVerdict::reject(VerdictMode::WitnessSearch, eps, d, w),
        }),
    }
}

/// First vertex (left side first, then right) whose degree is outside
/// `(d ± eps)` times the opposite side size.
pub fn degree_violation(pair: &BipartitePair, eps: f64, d: f64) -> Option<Witness> {
    let (a, b) = (pair.left_len(), pair.right_len());
    let sides = [(Side::Left, a, b), (Side::Right, b, a)];
    for (side, len, other) in sides {
        let low = (d - eps) * other as f64;
        let high = (d + eps) * other as f64;
        for v in 0..len {
            let deg = match side {
                Side::Left => pair.left_degree(v),
                Side::Right => pair.right_degree(v),
            };
            if (deg as f64) < low - 1e-9 || (deg as f64) > high + 1e-9 {
                return Some(Witness::Vertex { side, vertex: v, degree: deg, low, high });
            }
        }
    }
    None
}

/// Regularity plus the degree condition on every vertex of both sides.
pub fn super_regularity_verdict(pair: &BipartitePair, eps: f64, d: f64, method: Method) -> Result<RegularityVerdict> {
    check_params(eps, d)?;
    if method == Method::Exhaustive && pair.left_len() + pair.right_len() > EXHAUSTIVE_LIMIT {
        return Err(Error::Size(format!(
            "exhaustive verdict on {} vertices (limit {EXHAUSTIVE_LIMIT})",
            pair.left_len() + pair.right_len()
        )));
    }
    if let Some(w) = degree_violation(pair, eps, d) {
        return Ok(RegularityVerdict::reject(method.mode(), eps, d, w));
    }
    regularity_verdict(pair, eps, d, method)
}

/// Options for `typicality_verdict` when `s` is too large for a full scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sampling {
    pub seed: u64,
    pub samples_per_size: usize,
}

/// Largest `s` scanned exhaustively by `typicality_verdict`.
pub const TYPICALITY_EXHAUSTIVE_S: usize = 4;

fn first_bad_superset(
    g: &Graph,
    prefix: &mut Vec<usize>,
    common: &fixedbitset::FixedBitSet,
    next: usize,
    s: usize,
    windows: &[(f64, f64)],
) -> Option<Witness> {
    let n = g.vertex_count();
    for u in next..n {
        let mut c = common.clone();
        c.intersect_with(g.neighbour_set(u));
        prefix.push(u);
        let size = c.count_ones(..);
        let (low, high) = windows[prefix.len()];
        if (size as f64) < low - 1e-9 || (size as f64) > high + 1e-9 {
            let w = Witness::CommonNeighbourhood { set: prefix.clone(), size, low, high };
            prefix.pop();
            return Some(w);
        }
        if prefix.len() < s {
            if let Some(w) = first_bad_superset(g, prefix, &c, u + 1, s, windows) {
                prefix.pop();
                return Some(w);
            }
        }
        prefix.pop();
    }
    None
}

/// Checks `|⋂_{u∈U} N(u)| = (1 ± eps) d^{|U|} n` for all `U` with `1 ≤ |U| ≤ s`.
/// Exhaustive for `s ≤ 4`; otherwise every size is sampled with `sampling`.
pub fn typicality_verdict(g: &Graph, eps: f64, s: usize, d: f64, sampling: Option<Sampling>) -> Result<RegularityVerdict> {
    check_params(eps, d)?;
    if s == 0 {
        return Err(Error::Domain("typicality needs s ≥ 1".into()));
    }
    let n = g.vertex_count();
    let windows: Vec<(f64, f64)> = (0..=s)
        .map(|k| {
            let t = d.powi(k as i32) * n as f64;
            ((1.0 - eps) * t, (1.0 + eps) * t)
        })
        .collect();
    if s <= TYPICALITY_EXHAUSTIVE_S {
        let full = bitset_of(n, 0..n);
        let witness = (0..n).into_par_iter().find_map_first(|u| {
            let mut c = full.clone();
            c.intersect_with(g.neighbour_set(u));
            let size = c.count_ones(..);
            let (low, high) = windows[1];
            if (size as f64) < low - 1e-9 || (size as f64) > high + 1e-9 {
                return Some(Witness::CommonNeighbourhood { set: vec![u], size, low, high });
            }
            if s > 1 {
                let mut prefix = vec![u];
                first_bad_superset(g, &mut prefix, &c, u + 1, s, &windows)
            } else {
                None
            }
        });
        return Ok(match witness {
            None => RegularityVerdict::new(true, VerdictMode::Exhaustive, eps, d),
            Some(w) => RegularityVerdict::reject(VerdictMode::Exhaustive, eps, d, w),
        });
    }
    let smp = sampling.ok_or_else(|| Error::Domain(format!("s = {s} requires sampling options")))?;
    let mut rng = rng::rng(smp.seed);
    let verts: Vec<usize> = (0..n).collect();
    for k in 1..=s.min(n) {
        for _ in 0..smp.samples_per_size {
            let mut set: Vec<usize> = verts.choose_multiple(&mut rng, k).copied().collect();
            set.sort_unstable();
            let mut c = bitset_of(n, 0..n);
            for &u in &set {
                c.intersect_with(g.neighbour_set(u));
            }
            let size = c.count_ones(..);
            let (low, high) = windows[k];
            if (size as f64) < low - 1e-9 || (size as f64) > high + 1e-9 {
                return Ok(RegularityVerdict::reject(
                    VerdictMode::WitnessSearch,
                    eps,
                    d,
                    Witness::CommonNeighbourhood { set, size, low, high },
                ));
            }
        }
    }
    Ok(RegularityVerdict::new(true, VerdictMode::WitnessSearch, eps, d))
}

/// `(eps, d)`-quasirandomness: degrees `(d ± eps) n` and pair codegrees
/// `(d² ± eps) n`, checked over all vertices and distinct pairs.
pub fn quasirandomness_verdict(g: &Graph, eps: f64, d: f64) -> Result<RegularityVerdict> {
    check_params(eps, d)?;
    let n = g.vertex_count();
    let nf = n as f64;
    let (dl, dh) = ((d - eps) * nf, (d + eps) * nf);
    let (cl, ch) = ((d * d - eps) * nf, (d * d + eps) * nf);
    for u in 0..n {
        let deg = g.degree(u) as f64;
        if deg < dl - 1e-9 || deg > dh + 1e-9 {
            return Ok(RegularityVerdict::reject(
                VerdictMode::Exhaustive,
                eps,
                d,
                Witness::CommonNeighbourhood { set: vec![u], size: deg as usize, low: dl, high: dh },
            ));
        }
    }
    let witness = (0..n).into_par_iter().find_map_first(|u| {
        (u + 1..n).find_map(|v| {
            let c = g.codegree(u, v);
            if (c as f64) < cl - 1e-9 || (c as f64) > ch + 1e-9 {
                Some(Witness::CommonNeighbourhood { set: vec![u, v], size: c, low: cl, high: ch })
            } else {
                None
            }
        })
    });
    Ok(match witness {
        None => RegularityVerdict::new(true, VerdictMode::Exhaustive, eps, d),
        Some(w) => RegularityVerdict::reject(VerdictMode::Exhaustive, eps, d, w),
    })
}

/// Number of left vertices whose degree into `y` (local right indices) lies
/// outside `(d ± eps)|y|`.
pub fn exception_count(pair: &BipartitePair, y: &[usize], eps: f64, d: f64) -> Result<usize> {
    check_params(eps, d)?;
    if (y.len() as f64) < eps * pair.right_len() as f64 - 1e-9 || y.is_empty() {
        return Err(Error::Domain(format!(
            "|Y| = {} below eps·|B| = {}",
            y.len(),
            eps * pair.right_len() as f64
        )));
    }
    let ys = bitset_of(pair.right_len(), y.iter().copied());
    let (low, high) = ((d - eps) * y.len() as f64, (d + eps) * y.len() as f64);
    Ok((0..pair.left_len())
        .filter(|&i| {
            let k = pair.left_neighbours(i).intersection_count(&ys) as f64;
            k < low - 1e-9 || k > high + 1e-9
        })
        .count())
}

/// A pair with some vertices and edges removed, plus the sizes of what was removed.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub pair: BipartitePair,
    /// Maximum degree of the removed graph, for the caller's robustness bound.
    pub removed_max_degree: usize,
    pub removed_vertex_count: usize,
}

/// Deletes `removed_vertices` and the edges of `removed_graph` from the pair.
/// Both are given in the global vertex ids the pair was built with.
pub fn residual_pair(pair: &BipartitePair, removed_graph: &Graph, removed_vertices: &[usize]) -> Residual {
    let gone: std::collections::HashSet<usize> = removed_vertices.iter().copied().collect();
    let keep_l: Vec<usize> = (0..pair.left_len()).filter(|&i| !gone.contains(&pair.left_ids()[i])).collect();
    let keep_r: Vec<usize> = (0..pair.right_len()).filter(|&j| !gone.contains(&pair.right_ids()[j])).collect();
    let mut out = pair.restrict(&keep_l, &keep_r);
    for (i, j) in out.edges() {
        if removed_graph.has_edge(out.left_ids()[i], out.right_ids()[j]) {
            out.remove_edge(i, j);
        }
    }
    Residual {
        pair: out,
        removed_max_degree: removed_graph.max_degree(),
        removed_vertex_count: gone.len(),
    }
}

/// Convenience: the pair `G[V_i, V_j]` of a host graph.
pub fn host_pair(g: &Graph, vi: &[usize], vj: &[usize]) -> Result<BipartitePair> {
    BipartitePair::from_graph(g, vi, vj)
}
