//! Refines every cluster of every guest into `k = β⁻¹` sub-clusters that are
//! independent in `H²`, balanced in size, balanced for every registered weight,
//! and balanced in cross-guest edge counts.

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bitset_of, Graph};
use crate::instance::ConditionRow;
use crate::rng;
use crate::testers::Weight;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// `β⁻¹`, the number of sub-clusters per cluster.
    pub parts: usize,
    pub max_retries: usize,
    pub seed: u64,
    /// Override for the weight tolerance (default `β^{3/2} n`).
    #[serde(default)]
    pub weight_tolerance: Option<f64>,
    /// Override for the edge-balance tolerance (default `n^{5/3}`).
    #[serde(default)]
    pub edge_tolerance: Option<f64>,
}

impl SplitConfig {
    pub fn new(parts: usize, seed: u64) -> SplitConfig {
        SplitConfig { parts, max_retries: 100, seed, weight_tolerance: None, edge_tolerance: None }
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.parts as f64
    }
}

/// `parts[guest][cluster][sub]` → guest vertex ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RefinedPartition {
    pub parts: Vec<Vec<Vec<Vec<usize>>>>,
}

pub const COND_INDEPENDENT: &str = "square-independent";
pub const COND_BALANCED: &str = "balanced";
pub const COND_WEIGHTS: &str = "weight-balanced";
pub const COND_EDGES: &str = "edge-balanced";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub rows: Vec<ConditionRow>,
    /// Reference cluster size `n` the tolerances scale with.
    pub scale: f64,
    pub weight_tolerance: f64,
    pub edge_tolerance: f64,
    pub max_weight_deviation: f64,
    pub max_edge_deviation: f64,
    /// True when every edge target is smaller than its tolerance, so the
    /// edge-balance row passes without constraining anything.
    pub edge_balance_vacuous: bool,
    pub attempts: usize,
    pub swaps: usize,
}

impl SplitReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// Mean cluster size across the first guest, the `n` of the tolerances.
fn scale_of(clusters: &[Vec<Vec<usize>>]) -> f64 {
    let first = match clusters.first() {
        Some(c) if !c.is_empty() => c,
        _ => return 0.0,
    };
    first.iter().map(|c| c.len()).sum::<usize>() as f64 / first.len() as f64
}

fn validate(guests: &[Graph], clusters: &[Vec<Vec<usize>>], cfg: &SplitConfig) -> Result<f64> {
    if cfg.parts < 2 {
        return Err(Error::Config(format!("β⁻¹ = {} must be at least 2", cfg.parts)));
    }
    if guests.len() != clusters.len() {
        return Err(Error::Structure("one cluster list per guest required".into()));
    }
    let n = scale_of(clusters);
    if let Some(first) = clusters.first() {
        for (g, cl) in clusters.iter().enumerate() {
            if cl.len() != first.len() {
                return Err(Error::Structure(format!("guest {g} has a different cluster count")));
            }
            for (i, c) in cl.iter().enumerate() {
                if c.len() != first[i].len() {
                    return Err(Error::Structure(format!("cluster {i} of guest {g} differs in size")));
                }
                let len = c.len() as f64;
                if len < n / 2.0 - 1e-9 || len > 2.0 * n + 1e-9 {
                    return Err(Error::Domain(format!("cluster {i} size {} outside [n/2, 2n] for n = {n}", c.len())));
                }
                if c.len() < cfg.parts {
                    return Err(Error::Config(format!("cluster {i} has fewer than β⁻¹ = {} vertices", cfg.parts)));
                }
                if c.iter().any(|&x| x >= guests[g].vertex_count()) {
                    return Err(Error::Structure(format!("guest {g} cluster {i} has an out-of-range vertex")));
                }
            }
        }
    }
    Ok(n)
}

struct ClusterSplit {
    parts: Vec<Vec<usize>>,
    swaps: usize,
}

/// Random balanced assignment followed by the conflict-resolving swap pass
/// and the divisibility fix-up. `None` means the swap pass got stuck.
fn split_cluster(h2: &Graph, xs: &[usize], k: usize, rng: &mut rng::Rng) -> Option<ClusterSplit> {
    let nv = h2.vertex_count();
    let q = xs.len() / k;
    let rem = xs.len() % k;
    let mut order = xs.to_vec();
    order.shuffle(rng);
    let (tilde, rest) = order.split_at(rem);

    let mut part: Vec<Vec<usize>> = rest.chunks(q).map(|c| c.to_vec()).collect();
    // Conflicted vertices: an H²-neighbour inside their own part.
    let sets: Vec<FixedBitSet> = part.iter().map(|p| bitset_of(nv, p.iter().copied())).collect();
    let mut removed: Vec<Vec<usize>> = part
        .iter()
        .zip(&sets)
        .map(|(p, s)| p.iter().copied().filter(|&x| h2.degree_into(x, s) > 0).collect())
        .collect();
    let c = removed.iter().map(|w| w.len()).max().unwrap_or(0);
    for (j, w) in removed.iter_mut().enumerate() {
        let mut spare: Vec<usize> = part[j].iter().copied().filter(|x| !w.contains(x)).collect();
        spare.shuffle(rng);
        w.extend(spare.into_iter().take(c - w.len()));
    }
    let mut z: Vec<FixedBitSet> = (0..k)
        .map(|j| {
            let mut s = sets[j].clone();
            for &x in &removed[j] {
                s.set(x, false);
            }
            s
        })
        .collect();
    let mut queue: Vec<(usize, usize)> = removed
        .iter()
        .enumerate()
        .flat_map(|(j, w)| w.iter().map(move |&x| (x, j)))
        .collect();
    queue.shuffle(rng);
    let mut labels: Vec<usize> = (0..k).flat_map(|j| std::iter::repeat(j).take(c)).collect();
    labels.shuffle(rng);

    let mut swaps = 0usize;
    // Moves `x` into part `target` (which grows by one), either via a swap
    // through an intermediate part or directly.
    let mut place = |x: usize, home: Option<usize>, target: usize, z: &mut Vec<FixedBitSet>, rng: &mut rng::Rng| -> bool {
        let movers = |zj: &FixedBitSet, z_target: &FixedBitSet| -> Vec<usize> {
            zj.ones().filter(|&u| h2.degree_into(u, z_target) == 0).collect()
        };
        let admissible: Vec<usize> = (0..k)
            .filter(|&j2| j2 != target && Some(j2) != home)
            .filter(|&j2| h2.degree_into(x, &z[j2]) == 0)
            .filter(|&j2| !movers(&z[j2], &z[target]).is_empty())
            .collect();
        if let Some(&j2) = admissible.choose(rng) {
            let cands = movers(&z[j2], &z[target]);
            let u = *cands.choose(rng).expect("admissible part has a mover");
            z[j2].set(u, false);
            z[j2].insert(x);
            z[target].insert(u);
            swaps += 1;
            true
        } else if h2.degree_into(x, &z[target]) == 0 {
            z[target].insert(x);
            true
        } else {
            false
        }
    };
    for (t, &(x, home)) in queue.iter().enumerate() {
        if !place(x, Some(home), labels[t], &mut z, rng) {
            return None;
        }
    }
    // Divisibility fix-up: the last `rem` parts each absorb one leftover vertex.
    for (t, &x) in tilde.iter().enumerate() {
        if !place(x, None, k - rem + t, &mut z, rng) {
            return None;
        }
    }
    part = z.iter().map(|s| s.ones().collect()).collect();
    Some(ClusterSplit { parts: part, swaps })
}

/// Random reordering within the blocks of equal-size sub-clusters, which keeps
/// the ascending size profile.
fn permute_blocks(parts: &mut [Vec<usize>], rng: &mut rng::Rng) {
    let mut start = 0;
    while start < parts.len() {
        let mut end = start + 1;
        while end < parts.len() && parts[end].len() == parts[start].len() {
            end += 1;
        }
        parts[start..end].shuffle(rng);
        start = end;
    }
}

fn first_square_conflict(h2: &Graph, sub: &[usize]) -> Option<(usize, usize)> {
    let s = bitset_of(h2.vertex_count(), sub.iter().copied());
    for &x in sub {
        if let Some(y) = h2.neighbour_set(x).intersection(&s).next() {
            return Some((x.min(y), x.max(y)));
        }
    }
    None
}

fn check_guest(
    guests: &[Graph],
    g: usize,
    h2: &Graph,
    clusters: &[Vec<usize>],
    refined: &[Vec<Vec<usize>>],
    k: usize,
    weights: &[Weight],
    tol: f64,
) -> (Option<serde_json::Value>, Option<serde_json::Value>, Option<serde_json::Value>, f64) {
    let beta = 1.0 / k as f64;
    let mut indep = None;
    let mut bal = None;
    let mut wbad = None;
    let mut worst = 0.0f64;
    for (i, subs) in refined.iter().enumerate() {
        if indep.is_none() {
            for (j, sub) in subs.iter().enumerate() {
                if let Some((x, y)) = first_square_conflict(h2, sub) {
                    indep = Some(serde_json::json!({ "guest": g, "cluster": i, "sub": j, "x": x, "y": y }));
                    break;
                }
            }
        }
        if bal.is_none() {
            let mut cover: Vec<usize> = subs.iter().flatten().copied().collect();
            cover.sort_unstable();
            let mut orig = clusters[i].clone();
            orig.sort_unstable();
            let sizes: Vec<usize> = subs.iter().map(|s| s.len()).collect();
            let sorted = sizes.windows(2).all(|w| w[0] <= w[1]);
            let spread = sizes.first().zip(sizes.last()).map_or(0, |(a, b)| b.saturating_sub(*a));
            if subs.len() != k || cover != orig || !sorted || spread > 1 {
                bal = Some(serde_json::json!({ "guest": g, "cluster": i, "sizes": sizes, "covers": cover == orig }));
            }
        }
        for (wi, w) in weights.iter().enumerate() {
            let total = w.total(guests, g, &clusters[i]);
            for (j, sub) in subs.iter().enumerate() {
                let dev = (w.total(guests, g, sub) - beta * total).abs();
                worst = worst.max(dev);
                if dev > tol + 1e-9 && wbad.is_none() {
                    wbad = Some(serde_json::json!({ "guest": g, "cluster": i, "sub": j, "weight": wi, "deviation": dev }));
                }
            }
        }
    }
    (indep, bal, wbad, worst)
}

/// Summed edge counts between sub-clusters (keyed by the unordered pair of
/// sub-cluster positions) and between clusters. Counts follow the ordered-pair
/// convention, so a cluster paired with itself counts each inner edge twice.
fn edge_profile(
    guests: &[Graph],
    refined: &RefinedPartition,
) -> (BTreeMap<((usize, usize), (usize, usize)), usize>, BTreeMap<(usize, usize), usize>) {
    let mut sub_pairs = BTreeMap::new();
    let mut cl_pairs = BTreeMap::new();
    for (g, h) in guests.iter().enumerate() {
        let mut loc = vec![None; h.vertex_count()];
        for (i, subs) in refined.parts[g].iter().enumerate() {
            for (j, sub) in subs.iter().enumerate() {
                for &x in sub {
                    loc[x] = Some((i, j));
                }
            }
        }
        for (x, y) in h.edges() {
            if let (Some(a), Some(b)) = (loc[x], loc[y]) {
                if a != b {
                    *sub_pairs.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
                let (ci, cj) = (a.0.min(b.0), a.0.max(b.0));
                *cl_pairs.entry((ci, cj)).or_insert(0) += if ci == cj { 2 } else { 1 };
            }
        }
    }
    (sub_pairs, cl_pairs)
}

/// Checks the (i) independence, (ii) balance, (iii) weight and (iv) edge
/// conditions of a refinement and reports the first witness of each failure.
pub fn check_refinement(
    guests: &[Graph],
    clusters: &[Vec<Vec<usize>>],
    refined: &RefinedPartition,
    cfg: &SplitConfig,
    weights: &[Weight],
) -> SplitReport {
    let n = scale_of(clusters);
    let beta = cfg.beta();
    let wtol = cfg.weight_tolerance.unwrap_or(beta.powf(1.5) * n);
    let etol = cfg.edge_tolerance.unwrap_or(n.powf(5.0 / 3.0));
    let per_guest: Vec<_> = guests
        .par_iter()
        .enumerate()
        .map(|(g, h)| {
            let h2 = h.square();
            check_guest(guests, g, &h2, &clusters[g], &refined.parts[g], cfg.parts, weights, wtol)
        })
        .collect();
    let mut indep = None;
    let mut bal = None;
    let mut wbad = None;
    let mut wworst = 0.0f64;
    for (a, b, c, w) in per_guest {
        indep = indep.or(a);
        bal = bal.or(b);
        wbad = wbad.or(c);
        wworst = wworst.max(w);
    }
    let (sub_pairs, cl_pairs) = edge_profile(guests, refined);
    let mut ebad = None;
    let mut eworst = 0.0f64;
    let mut vacuous = true;
    let r = clusters.first().map_or(0, |c| c.len());
    for i in 0..r {
        for ip in i..r {
            let base = *cl_pairs.get(&(i, ip)).unwrap_or(&0) as f64;
            let target = beta * beta * base;
            if target > etol {
                vacuous = false;
            }
            for j in 0..cfg.parts {
                for jp in 0..cfg.parts {
                    if i == ip && jp < j {
                        continue;
                    }
                    if i == ip && j == jp {
                        continue;
                    }
                    let got = *sub_pairs.get(&((i, j), (ip, jp))).unwrap_or(&0) as f64;
                    let dev = (got - target).abs();
                    eworst = eworst.max(dev);
                    if dev > etol + 1e-9 && ebad.is_none() {
                        ebad = Some(serde_json::json!({ "a": [i, j], "b": [ip, jp], "count": got, "target": target }));
                    }
                }
            }
        }
    }
    let row = |c: &str, w: Option<serde_json::Value>| ConditionRow { condition: c.into(), passed: w.is_none(), counterexample: w };
    SplitReport {
        rows: vec![row(COND_INDEPENDENT, indep), row(COND_BALANCED, bal), row(COND_WEIGHTS, wbad), row(COND_EDGES, ebad)],
        scale: n,
        weight_tolerance: wtol,
        edge_tolerance: etol,
        max_weight_deviation: wworst,
        max_edge_deviation: eworst,
        edge_balance_vacuous: vacuous,
        attempts: 0,
        swaps: 0,
    }
}

/// Splits every cluster of every guest into `cfg.parts` sub-clusters.
/// `clusters[guest][i]` lists the vertices of cluster `i` of that guest.
pub fn refine_collection(
    guests: &[Graph],
    clusters: &[Vec<Vec<usize>>],
    cfg: &SplitConfig,
    weights: &[Weight],
) -> Result<(RefinedPartition, SplitReport)> {
    let n = validate(guests, clusters, cfg)?;
    let k = cfg.parts;
    let wtol = cfg.weight_tolerance.unwrap_or(cfg.beta().powf(1.5) * n);
    let squares: Vec<Graph> = guests.par_iter().map(|h| h.square()).collect();

    let per_guest: Vec<std::result::Result<(Vec<Vec<Vec<usize>>>, usize, usize), String>> = (0..guests.len())
        .into_par_iter()
        .map(|g| {
            let mut last = String::new();
            for attempt in 0..cfg.max_retries.max(1) {
                let mut rng = rng::child(cfg.seed, &[g as u64, attempt as u64]);
                let mut swaps = 0;
                let mut out = Vec::with_capacity(clusters[g].len());
                let mut stuck = false;
                for xs in &clusters[g] {
                    match split_cluster(&squares[g], xs, k, &mut rng) {
                        Some(mut s) => {
                            permute_blocks(&mut s.parts, &mut rng);
                            swaps += s.swaps;
                            out.push(s.parts);
                        }
                        None => {
                            stuck = true;
                            break;
                        }
                    }
                }
                if stuck {
                    last = "swap procedure found no admissible target".into();
                    continue;
                }
                let (a, b, c, _) = check_guest(guests, g, &squares[g], &clusters[g], &out, k, weights, wtol);
                if let Some(w) = a.or(b).or(c) {
                    last = format!("guest {g}: {w}");
                    continue;
                }
                return Ok((out, swaps, attempt + 1));
            }
            Err(last)
        })
        .collect();

    let mut parts = Vec::with_capacity(guests.len());
    let mut swaps = 0;
    let mut attempts = 0;
    for (g, res) in per_guest.into_iter().enumerate() {
        match res {
            Ok((p, s, a)) => {
                parts.push(p);
                swaps += s;
                attempts = attempts.max(a);
            }
            Err(msg) => {
                let d2 = squares[g].max_degree();
                if k < 2 * d2 + 4 && msg.contains("admissible") {
                    return Err(Error::Config(format!(
                        "guest {g}: Δ(H²) = {d2} too large for β⁻¹ = {k}; {msg}"
                    )));
                }
                return Err(Error::RetryExhausted(format!("guest {g}: {msg}")));
            }
        }
    }
    let mut refined = RefinedPartition { parts };
    let mut report = check_refinement(guests, clusters, &refined, cfg, weights);
    let mut round = 0;
    while !report.all_passed() && round + 1 < cfg.max_retries.max(1) {
        round += 1;
        for (g, per) in refined.parts.iter_mut().enumerate() {
            let mut rng = rng::child(cfg.seed, &[u64::MAX, round as u64, g as u64]);
            for subs in per.iter_mut() {
                permute_blocks(subs, &mut rng);
            }
        }
        report = check_refinement(guests, clusters, &refined, cfg, weights);
    }
    report.attempts = attempts.max(round + 1);
    report.swaps = swaps;
    if !report.all_passed() {
        let failing = report.rows.iter().find(|r| !r.passed).map(|r| r.condition.clone()).unwrap_or_default();
        return Err(Error::RetryExhausted(format!("refinement condition `{failing}` still failing")));
    }
    Ok((refined, report))
}
