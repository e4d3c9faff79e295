//! The packing pipeline. [`pack_extended`] refines an extended blow-up
//! instance, pads the refined guest pairs and hands the result to
//! [`pack_matching_case`], which splits the host into two slices, packs the
//! clusters one at a time in colour order and finishes with a completion
//! pass. [`pack_quasirandom`] is the front end for quasirandom hosts and
//! [`verify_result`] re-checks any result from scratch.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidacy::{
    approximate_pack_step, niceify, psi_codegree, psi_degree, DeletionCensus, EdgeSetLabelling, EdgeTester,
    PackingInstance, Slot, SlotSide, StepParams, StepReport,
};
use crate::embedder::{embed_single, EmbedParams, EmbeddingTask};
use crate::error::{Error, Result};
use crate::graph::{bitset_of, BipartitePair, Graph};
use crate::instance::{BlowUpInstance, ConditionRow};
use crate::regularity::{super_regularity_verdict, Method};
use crate::rng;
use crate::splitter::{refine_collection, SplitConfig, SplitReport};
use crate::testers::{SetTester, TesterSuite, VertexTester, Weight};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub alpha: f64,
    /// Host density; measured over the reduced pairs when absent.
    pub density: Option<f64>,
    /// `β⁻¹`; searched upwards from 2 when absent.
    pub parts: Option<usize>,
    pub max_parts: usize,
    pub gamma: f64,
    pub mu: f64,
    /// `ε₀`; the measured regularity of the host slices when absent.
    pub eps0: Option<f64>,
    /// Padding parameter: refined guest pairs across `R′` get at least
    /// `pad_eps² n′` edges.
    pub pad_eps: f64,
    /// Ratio of the geometric schedule `ε_t = ε₀ κ^t`.
    pub kappa: f64,
    pub eps_slack: f64,
    /// Absolute slack in units of the cluster size.
    pub tol: f64,
    /// Sparsify every initial candidacy graph to its smallest row density.
    pub sparsify: bool,
    /// Halt on the first failed check instead of recording it.
    pub strict: bool,
    pub split_retries: usize,
    pub host_retries: usize,
    pub slice_retries: usize,
    pub step_retries: usize,
    pub completion_retries: usize,
    pub max_backtrack: usize,
    pub restarts: usize,
    pub weight_cap: usize,
    pub triple_samples: usize,
    /// Keep a copy of the partial packing after every step.
    pub snapshots: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            alpha: 0.25,
            density: None,
            parts: None,
            max_parts: 16,
            gamma: 0.15,
            mu: 0.15,
            eps0: None,
            pad_eps: 0.05,
            kappa: 1.5,
            eps_slack: 3.0,
            tol: 0.1,
            sparsify: true,
            strict: false,
            split_retries: 100,
            host_retries: 50,
            slice_retries: 5,
            step_retries: 3,
            completion_retries: 6,
            max_backtrack: 50,
            restarts: 20,
            weight_cap: 128,
            triple_samples: 4,
            snapshots: false,
        }
    }
}

impl PipelineConfig {
    pub fn new(seed: u64) -> PipelineConfig {
        PipelineConfig { seed, ..PipelineConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::Config(s));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} not in (0,1)", self.gamma));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad(format!("mu {} not in (0,1)", self.mu));
        }
        if matches!(self.eps0, Some(e) if !(e > 0.0 && e < 1.0)) {
            return bad(format!("eps0 {:?} not in (0,1)", self.eps0));
        }
        if !(self.pad_eps > 0.0 && self.pad_eps < 1.0) {
            return bad(format!("pad_eps {} not in (0,1)", self.pad_eps));
        }
        if self.kappa <= 1.0 {
            return bad(format!("kappa {} must exceed 1 for an increasing schedule", self.kappa));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} not in (0,1]", self.alpha));
        }
        if let Some(d) = self.density {
            if !(d > 0.0 && d <= 1.0) {
                return bad(format!("density {d} not in (0,1]"));
            }
        }
        if matches!(self.parts, Some(p) if p < 1) || self.max_parts < 2 {
            return bad("at least one part per cluster and a search range from 2".into());
        }
        Ok(())
    }
}

/// One item of the induction statement at some time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub item: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    /// Recorded only; a failure does not count against the state.
    pub enforced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

fn check(item: &str, measured: f64, bound: f64, passed: bool) -> CheckRow {
    CheckRow { item: item.into(), measured, bound, passed, enforced: true, detail: None }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub t: usize,
    /// Cluster processed to reach this state; `None` for the initial state.
    pub cluster: Option<usize>,
    pub colour: Option<usize>,
    pub eps_in: Option<f64>,
    /// `c_i(t)` and `m_i(t)` for every cluster (index 0 unused).
    pub c: Vec<usize>,
    pub m: Vec<usize>,
    pub checks: Vec<CheckRow>,
    pub embedded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub census: Option<DeletionCensus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub census_error: Option<String>,
}

impl LedgerEntry {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.enforced)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRow {
    pub guest: usize,
    pub attempt: usize,
    pub mu: f64,
    pub widened: bool,
    pub w_size: usize,
    pub leftovers: usize,
    pub high_vertices: usize,
    pub leftover_neighbours: usize,
    pub min_candidates: usize,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionReport {
    pub rows: Vec<CompletionRow>,
    pub edges_added: usize,
    /// Completion edges outside the reserved slice.
    pub edges_outside_slice: usize,
    pub leftovers_before: usize,
}

/// Partial packing after a step: per guest, sorted `[x, v]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub phi: Vec<Vec<[usize; 2]>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InductionLedger {
    pub density: f64,
    /// `ε₀` of the schedule, measured on the slices unless configured.
    pub eps0: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub alpha_a: Vec<f64>,
    pub alpha_b: Vec<f64>,
    pub colours: Vec<usize>,
    pub order: Vec<usize>,
    pub colouring_rows: Vec<ConditionRow>,
    pub slice_rows: Vec<ConditionRow>,
    pub slice_attempts: usize,
    pub entries: Vec<LedgerEntry>,
    pub provenance: Vec<ConditionRow>,
    pub completion: CompletionReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<Snapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TesterDeviation {
    pub index: usize,
    pub cluster: usize,
    pub value: f64,
    pub target: f64,
    pub deviation: f64,
    pub within: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeftoverStats {
    pub max_degree: usize,
    /// Largest `|leftover(v) − (deg_G(v) − m_i / |V_i|)|`, `m_i` the degree
    /// mass of the guest vertices of `v`'s cluster.
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub within: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub rows: Vec<ConditionRow>,
    pub tolerance_fraction: f64,
    pub set_testers: Vec<TesterDeviation>,
    pub vertex_testers: Vec<TesterDeviation>,
    pub leftover: LeftoverStats,
}

impl VerificationReport {
    pub fn valid(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, name: &str) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.condition == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub parts: usize,
    pub parts_tried: Vec<usize>,
    pub host_attempts: usize,
    pub host_max_deviation: f64,
    pub host_tolerance: f64,
    pub artificial_edges: usize,
    pub padding_target: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementReport>,
    pub ledger: InductionLedger,
    pub verification: VerificationReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PackingResult {
    /// Per guest, sorted `[x, φ(x)]` pairs.
    pub phi: Vec<Vec<[usize; 2]>>,
    pub report: PipelineReport,
    /// Wall-clock seconds per stage; not part of the serialized result.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl PackingResult {
    pub fn valid(&self) -> bool {
        self.report.verification.valid()
    }
}

fn pairs_of(phi: &[Vec<Option<usize>>]) -> Vec<Vec<[usize; 2]>> {
    phi.iter()
        .map(|m| m.iter().enumerate().filter_map(|(x, v)| v.map(|v| [x, v])).collect())
        .collect()
}

struct Clock(Vec<(String, f64)>, Instant);

impl Clock {
    fn new() -> Clock {
        Clock(Vec::new(), Instant::now())
    }

    /// Appends stages timed elsewhere and restarts the current lap.
    fn absorb(&mut self, laps: Vec<(String, f64)>) {
        self.0.extend(laps.into_iter().filter(|(s, _)| s != "verify"));
        self.1 = Instant::now();
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.0.push((stage.to_string(), (now - self.1).as_secs_f64()));
        self.1 = now;
    }
}

// ---------------------------------------------------------------------------
// Verification

pub const CHECK_COMPLETE: &str = "complete";
pub const CHECK_INJECTIVE: &str = "injective";
pub const CHECK_EDGES: &str = "edges-preserved";
pub const CHECK_DISJOINT: &str = "edge-disjoint";
pub const CHECK_CLUSTERS: &str = "clusters-exact";

fn crow(condition: &str, first: Option<serde_json::Value>) -> ConditionRow {
    ConditionRow { condition: condition.into(), passed: first.is_none(), counterexample: first }
}

/// Recomputes validity and every tester value from the instance and the
/// packing alone. `alpha` scales the tester tolerances (`α |V_i|`).
pub fn verify_result(result: &PackingResult, inst: &BlowUpInstance, testers: &TesterSuite, alpha: f64) -> VerificationReport {
    let ng = inst.guests.len();
    let hn = inst.host.vertex_count();
    let mut maps: Vec<Vec<Option<usize>>> = inst.guests.iter().map(|h| vec![None; h.vertex_count()]).collect();
    let mut first_complete = None;
    let mut first_inj = None;
    if result.phi.len() != ng {
        first_complete = Some(serde_json::json!({ "guests": result.phi.len(), "expected": ng }));
    }
    for (g, pairs) in result.phi.iter().enumerate().take(ng) {
        let mut used = vec![false; hn];
        for &[x, v] in pairs {
            if x >= maps[g].len() || v >= hn {
                first_complete.get_or_insert(serde_json::json!({ "guest": g, "x": x, "v": v, "reason": "out of range" }));
                continue;
            }
            if maps[g][x].is_some() {
                first_inj.get_or_insert(serde_json::json!({ "guest": g, "x": x, "reason": "mapped twice" }));
            }
            maps[g][x] = Some(v);
            if used[v] {
                first_inj.get_or_insert(serde_json::json!({ "guest": g, "v": v }));
            }
            used[v] = true;
        }
        if let Some(x) = maps[g].iter().position(|m| m.is_none()) {
            first_complete.get_or_insert(serde_json::json!({ "guest": g, "x": x, "reason": "not embedded" }));
        }
    }
    let mut first_edge = None;
    let mut first_disjoint = None;
    let mut owner: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (g, h) in inst.guests.iter().enumerate() {
        for (x, y) in h.edges() {
            let (Some(u), Some(v)) = (maps[g][x], maps[g][y]) else { continue };
            if !inst.host.has_edge(u, v) {
                first_edge.get_or_insert(serde_json::json!({ "guest": g, "edge": [x, y], "image": [u, v] }));
                continue;
            }
            let key = (u.min(v), u.max(v));
            if let Some(&other) = owner.get(&key) {
                first_disjoint.get_or_insert(serde_json::json!({ "host_edge": [key.0, key.1], "guests": [other, g] }));
            } else {
                owner.insert(key, g);
            }
        }
    }
    let hc = inst.host_cluster_map();
    let mut first_cluster = None;
    for (g, parts) in inst.guest_partitions.iter().enumerate() {
        for (i, xs) in parts.iter().enumerate() {
            let mut imgs: Vec<usize> = xs.iter().filter_map(|&x| maps[g].get(x).copied().flatten()).collect();
            imgs.sort_unstable();
            let ok = if i == 0 {
                imgs.iter().all(|&v| hc.get(v) == Some(&0))
            } else {
                let mut vs = inst.host_partition.get(i).cloned().unwrap_or_default();
                vs.sort_unstable();
                imgs == vs
            };
            if !ok {
                first_cluster.get_or_insert(serde_json::json!({ "guest": g, "cluster": i }));
            }
        }
    }
    let rows = vec![
        crow(CHECK_COMPLETE, first_complete),
        crow(CHECK_INJECTIVE, first_inj),
        crow(CHECK_EDGES, first_edge),
        crow(CHECK_DISJOINT, first_disjoint),
        crow(CHECK_CLUSTERS, first_cluster),
    ];

    // Inverse maps: preimage of each host vertex per guest.
    let inverse: Vec<Vec<Option<usize>>> = maps
        .iter()
        .map(|m| {
            let mut inv = vec![None; hn];
            for (x, v) in m.iter().enumerate() {
                if let Some(v) = v {
                    inv[*v] = Some(x);
                }
            }
            inv
        })
        .collect();
    let set_testers = testers
        .set_testers
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let n = inst.host_partition.get(t.cluster).map_or(1, |p| p.len().max(1)) as f64;
            let value = t
                .w
                .iter()
                .filter(|&&v| {
                    t.ys.iter().all(|(g, ys)| inverse.get(*g).and_then(|inv| inv[v]).map_or(false, |x| ys.contains(&x)))
                })
                .count() as f64;
            let target = t.target(n);
            let deviation = (value - target).abs();
            TesterDeviation { index: k, cluster: t.cluster, value, target, deviation, within: deviation <= alpha * n + 1e-9 }
        })
        .collect();
    let vertex_testers = testers
        .vertex_testers
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let i = t.cluster;
            let n = inst.host_partition.get(i).map_or(1, |p| p.len().max(1)) as f64;
            let value: f64 = (0..ng)
                .filter_map(|g| inverse[g].get(t.v).copied().flatten().map(|x| (g, x)))
                .filter(|&(g, x)| inst.guest_partitions[g].get(i).map_or(false, |p| p.contains(&x)))
                .map(|(g, x)| t.weight.eval(&inst.guests, g, x))
                .sum();
            let total: f64 = (0..ng)
                .map(|g| inst.guest_partitions[g].get(i).map_or(0.0, |p| t.weight.total(&inst.guests, g, p)))
                .sum();
            let target = total / n;
            let deviation = (value - target).abs();
            TesterDeviation { index: k, cluster: i, value, target, deviation, within: deviation <= alpha * n + 1e-9 }
        })
        .collect();

    // Leftover degrees of G − φ(ℋ).
    let mut used_deg = vec![0usize; hn];
    for &(u, v) in owner.keys() {
        used_deg[u] += 1;
        used_deg[v] += 1;
    }
    let mass: Vec<f64> = (0..inst.host_partition.len())
        .map(|i| {
            let n = inst.host_partition[i].len().max(1) as f64;
            let m: f64 = inst
                .guests
                .iter()
                .zip(&inst.guest_partitions)
                .map(|(h, parts)| parts.get(i).map_or(0.0, |p| p.iter().map(|&x| h.degree(x) as f64).sum()))
                .sum();
            m / n
        })
        .collect();
    let mut leftover = LeftoverStats::default();
    let mut devs = Vec::new();
    for (i, part) in inst.host_partition.iter().enumerate() {
        for &v in part {
            let left = inst.host.degree(v) - used_deg[v];
            leftover.max_degree = leftover.max_degree.max(left);
            let dev = (left as f64 - (inst.host.degree(v) as f64 - mass[i])).abs();
            leftover.max_deviation = leftover.max_deviation.max(dev);
            devs.push(dev);
        }
    }
    leftover.mean_deviation = if devs.is_empty() { 0.0 } else { devs.iter().sum::<f64>() / devs.len() as f64 };
    let n_min = inst.host_partition.iter().skip(1).map(|p| p.len()).min().unwrap_or(0) as f64;
    leftover.within = leftover.max_deviation <= alpha * n_min + 1e-9;
    VerificationReport { rows, tolerance_fraction: alpha, set_testers, vertex_testers, leftover }
}

// ---------------------------------------------------------------------------
// Matching case

/// `[guest][x] → (cluster, local index)`.
fn guest_positions(inst: &BlowUpInstance) -> Vec<Vec<(usize, usize)>> {
    inst.guests
        .iter()
        .zip(&inst.guest_partitions)
        .map(|(h, parts)| {
            let mut p = vec![(usize::MAX, usize::MAX); h.vertex_count()];
            for (i, xs) in parts.iter().enumerate() {
                for (a, &x) in xs.iter().enumerate() {
                    p[x] = (i, a);
                }
            }
            p
        })
        .collect()
}

/// `rows[u]`: neighbours of host vertex `u` inside `part`, as local indices.
fn local_rows(host: &Graph, part: &[usize]) -> Vec<FixedBitSet> {
    let mut rows = vec![FixedBitSet::with_capacity(part.len()); host.vertex_count()];
    for (b, &v) in part.iter().enumerate() {
        for u in host.neighbours(v) {
            rows[u].insert(b);
        }
    }
    rows
}

fn pair_from_rows(rows: &[FixedBitSet], right: usize) -> BipartitePair {
    let mut p = BipartitePair::empty(rows.len(), right);
    for (a, row) in rows.iter().enumerate() {
        for b in row.ones() {
            p.add_edge(a, b);
        }
    }
    p
}

/// Graph on `1..=r` joining clusters at distance at most 3 in `R`.
fn cube(reduced: &Graph) -> Graph {
    let n = reduced.vertex_count();
    let mut out = Graph::new(n);
    for s in 1..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if dist[u] == 3 {
                continue;
            }
            for w in reduced.neighbours(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
            }
        }
        for w in s + 1..n {
            if dist[w] != usize::MAX && w != 0 {
                let _ = out.add_edge(s, w);
            }
        }
    }
    out
}

/// Greedy proper colouring of `R³` in order of descending degree; colours
/// start at 1 and index 0 keeps colour 0.
pub fn colour_schedule(reduced: &Graph) -> (Vec<usize>, Vec<usize>) {
    let c3 = cube(reduced);
    let n = reduced.vertex_count();
    let mut by_deg: Vec<usize> = (1..n).collect();
    by_deg.sort_by_key(|&i| (std::cmp::Reverse(c3.degree(i)), i));
    let mut colour = vec![0usize; n];
    for &i in &by_deg {
        let taken: Vec<usize> = c3.neighbours(i).map(|j| colour[j]).collect();
        colour[i] = (1..).find(|c| !taken.contains(c)).unwrap();
    }
    let mut order: Vec<usize> = (1..n).collect();
    order.sort_by_key(|&i| (colour[i], i));
    (colour, order)
}

fn colouring_rows(reduced: &Graph, colour: &[usize], order: &[usize]) -> Vec<ConditionRow> {
    let c3 = cube(reduced);
    let clash = c3.edges().into_iter().find(|&(a, b)| colour[a] == colour[b]);
    let dec = order.windows(2).find(|w| colour[w[0]] > colour[w[1]]);
    vec![
        crow("cube-colouring-proper", clash.map(|(a, b)| serde_json::json!({ "clusters": [a, b] }))),
        crow("order-non-decreasing", dec.map(|w| serde_json::json!({ "clusters": [w[0], w[1]] }))),
    ]
}

/// Mean edge density over the reduced pairs.
fn measured_density(inst: &BlowUpInstance) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j) in inst.reduced.edges() {
        num += inst.host.edges_between(&inst.host_partition[i], &inst.host_partition[j]) as f64;
        den += (inst.host_partition[i].len() * inst.host_partition[j].len()) as f64;
    }
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Smallest `ε` on a `0.01` grid at which every reduced pair of both slices
/// is super-regular; 0.99 when none is.
fn slice_epsilon(inst: &BlowUpInstance, ga: &Graph, gb: &Graph, d_a: f64, d_b: f64) -> f64 {
    let pairs: Vec<(BipartitePair, f64)> = inst
        .reduced
        .edges()
        .into_iter()
        .flat_map(|(i, j)| {
            let (vi, vj) = (&inst.host_partition[i], &inst.host_partition[j]);
            [(ga, d_a), (gb, d_b)].map(|(g, dz)| (BipartitePair::from_graph(g, vi, vj).expect("cluster ids in range"), dz))
        })
        .collect();
    let ok = |k: usize| -> bool {
        let eps = k as f64 / 100.0;
        pairs.par_iter().all(|(p, dz)| {
            super_regularity_verdict(p, eps, dz.min(1.0), Method::auto(p.left_len() + p.right_len()))
                .map(|v| v.accepted)
                .unwrap_or(false)
        })
    };
    // Acceptance is monotone in ε for the degree window and the certificate.
    let (mut lo, mut hi) = (1usize, 99usize);
    if !ok(hi) {
        return 0.99;
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    hi as f64 / 100.0
}

/// Splits the host edges into `G_A` and `G_B` (each edge to `G_B` with
/// probability `γ`). With a configured `ε₀` the split is resampled until both
/// slices are super-regular at `ε₀`; otherwise `ε₀` is the measured value.
fn split_slices(inst: &BlowUpInstance, cfg: &PipelineConfig, d: f64) -> (Graph, Graph, f64, Vec<ConditionRow>, usize) {
    let (d_a, d_b) = ((1.0 - cfg.gamma) * d, cfg.gamma * d);
    let mut best: Option<(f64, Graph, Graph)> = None;
    let mut attempts = 0;
    for attempt in 0..cfg.slice_retries.max(1) {
        attempts += 1;
        let mut r = rng::child(cfg.seed, &[0x511CE, attempt as u64]);
        let nv = inst.host.vertex_count();
        let mut ga = Graph::new(nv);
        let mut gb = Graph::new(nv);
        for (u, v) in inst.host.edges() {
            let target = if r.gen::<f64>() < cfg.gamma { &mut gb } else { &mut ga };
            let _ = target.add_edge(u, v);
        }
        let measured = slice_epsilon(inst, &ga, &gb, d_a, d_b);
        if best.as_ref().map_or(true, |b| measured < b.0) {
            best = Some((measured, ga, gb));
        }
        match cfg.eps0 {
            Some(e) if measured > e + 1e-9 => continue,
            _ => break,
        }
    }
    let (measured, ga, gb) = best.unwrap();
    let eps0 = cfg.eps0.unwrap_or(measured);
    let regular = (measured > eps0 + 1e-9).then(|| serde_json::json!({ "measured_eps": measured, "required": eps0 }));

    // Linkedness room in the packing slice.
    let phi0 = inst.phi0_maps();
    let mut room_fail = None;
    'outer: for (g, (h, parts)) in inst.guests.iter().zip(&inst.guest_partitions).enumerate() {
        for (i, xs) in parts.iter().enumerate().skip(1) {
            for &x in xs {
                let imgs: Vec<usize> = h.neighbours(x).filter_map(|y| phi0[g][y]).collect();
                if imgs.is_empty() {
                    continue;
                }
                let room = inst.host_partition[i].iter().filter(|&&v| imgs.iter().all(|&u| ga.has_edge(u, v))).count();
                if (room as f64) < cfg.alpha * d_a * inst.host_partition[i].len() as f64 {
                    room_fail = Some(serde_json::json!({ "guest": g, "x": x, "room": room }));
                    break 'outer;
                }
            }
        }
    }
    let rows = vec![crow("slices-super-regular", regular), crow("slice-a-linked", room_fail)];
    (ga, gb, eps0, rows, attempts)
}

/// `ε_t = ε₀ κ^t` and the verification parameter `min(slack ε_t, 0.95)`.
#[derive(Clone, Copy, Debug)]
struct Schedule {
    eps0: f64,
    kappa: f64,
    slack: f64,
}

impl Schedule {
    fn eps(&self, t: usize) -> f64 {
        self.eps0 * self.kappa.powi(t as i32)
    }

    fn check(&self, t: usize) -> f64 {
        (self.slack * self.eps(t)).min(0.95)
    }
}

struct Case<'a> {
    inst: &'a BlowUpInstance,
    cfg: &'a PipelineConfig,
    sched: Schedule,
    guests: Arc<Vec<Graph>>,
    ga: Arc<Graph>,
    gb: Arc<Graph>,
    pos: Vec<Vec<(usize, usize)>>,
    /// Initial candidacy graphs after sparsification, `[guest][cluster]`.
    init_a: Vec<Vec<BipartitePair>>,
    cand_a: Vec<Vec<BipartitePair>>,
    cand_b: Vec<Vec<BipartitePair>>,
    alpha_a: Vec<f64>,
    alpha_b: Vec<f64>,
    d_a: f64,
    d_b: f64,
    phi: Vec<Vec<Option<usize>>>,
    labelling: EdgeSetLabelling,
    processed: Vec<bool>,
    colour: Vec<usize>,
}

/// Initial candidacy of one slice: `v` survives for `x` when every
/// pre-embedded neighbour's image is adjacent to `v` in the slice.
fn initial_candidacy(inst: &BlowUpInstance, slice: &Graph, phi0: &[Vec<Option<usize>>]) -> Vec<Vec<BipartitePair>> {
    (0..inst.guests.len())
        .into_par_iter()
        .map(|g| {
            let h = &inst.guests[g];
            inst.guest_partitions[g]
                .iter()
                .enumerate()
                .map(|(i, xs)| {
                    let vs = &inst.host_partition[i];
                    if i == 0 {
                        return BipartitePair::empty(xs.len(), vs.len());
                    }
                    let mut p = BipartitePair::empty(xs.len(), vs.len());
                    for (a, &x) in xs.iter().enumerate() {
                        let imgs: Vec<usize> = h.neighbours(x).filter_map(|y| phi0[g][y]).collect();
                        for (b, &v) in vs.iter().enumerate() {
                            if imgs.iter().all(|&u| slice.has_edge(u, v)) {
                                p.add_edge(a, b);
                            }
                        }
                    }
                    p
                })
                .collect()
        })
        .collect()
}

/// Thins every row of cluster `i` to exactly `⌈α_i |V_i|⌉` edges, `α_i` the
/// smallest row density of that cluster over all guests.
fn sparsify(cands: &mut [Vec<BipartitePair>], seed: u64, on: bool) -> Vec<f64> {
    let clusters = cands.first().map_or(0, |c| c.len());
    let mut alphas = vec![1.0; clusters];
    for i in 1..clusters {
        let n = cands[0][i].right_len();
        if n == 0 {
            continue;
        }
        let mut min = 1.0f64;
        for per in cands.iter() {
            for a in 0..per[i].left_len() {
                min = min.min(per[i].left_degree(a) as f64 / n as f64);
            }
        }
        if !on || min >= 1.0 {
            continue;
        }
        alphas[i] = min;
        let keep = (min * n as f64).round() as usize;
        for (g, per) in cands.iter_mut().enumerate() {
            let mut r = rng::child(seed, &[0x5BA, g as u64, i as u64]);
            let p = &mut per[i];
            for a in 0..p.left_len() {
                let mut row: Vec<usize> = p.left_neighbours(a).ones().collect();
                if row.len() <= keep {
                    continue;
                }
                row.shuffle(&mut r);
                for &b in &row[keep..] {
                    p.remove_edge(a, b);
                }
            }
        }
    }
    alphas
}

impl<'a> Case<'a> {
    fn r(&self) -> usize {
        self.inst.r()
    }

    fn m_of(&self, i: usize) -> usize {
        self.inst.reduced.neighbours(i).filter(|&j| self.processed[j]).count()
    }

    fn c_of(&self, i: usize) -> usize {
        std::iter::once(i)
            .chain(self.inst.reduced.neighbours(i))
            .filter(|&j| self.processed[j])
            .map(|j| self.colour[j])
            .max()
            .unwrap_or(0)
    }

    fn density_a(&self, i: usize) -> f64 {
        self.alpha_a[i] * self.d_a.powi(self.m_of(i) as i32)
    }

    fn density_b(&self, i: usize) -> f64 {
        self.alpha_b[i] * self.d_b.powi(self.m_of(i) as i32)
    }

    fn embedded(&self) -> usize {
        self.phi.iter().map(|m| m.iter().filter(|v| v.is_some()).count()).sum()
    }

    /// Candidacy of cluster `c` given everything embedded so far.
    fn full_candidacy(&self, c: usize) -> Vec<BipartitePair> {
        let vs = &self.inst.host_partition[c];
        let rows_a = local_rows(&self.ga, vs);
        (0..self.guests.len())
            .into_par_iter()
            .map(|g| {
                let h = &self.guests[g];
                let xs = &self.inst.guest_partitions[g][c];
                let rows: Vec<FixedBitSet> = xs
                    .iter()
                    .enumerate()
                    .map(|(a, &x)| {
                        let mut row = self.init_a[g][c].left_neighbours(a).clone();
                        for y in h.neighbours(x) {
                            if self.pos[g][y].0 == 0 {
                                continue;
                            }
                            if let Some(u) = self.phi[g][y] {
                                row.intersect_with(&rows_a[u]);
                            }
                        }
                        row
                    })
                    .collect();
                pair_from_rows(&rows, vs.len())
            })
            .collect()
    }

    fn slot(&self, side: SlotSide, cluster: usize, density: f64) -> Slot {
        Slot {
            side,
            cluster,
            host: self.inst.host_partition[cluster].clone(),
            guest_parts: self.inst.guest_partitions.iter().map(|p| p[cluster].clone()).collect(),
            density,
        }
    }

    /// The packing instance for processing cluster `c`.
    fn build_step(&self, c: usize) -> PackingInstance {
        let ng = self.guests.len();
        let full = self.full_candidacy(c);
        let n = self.inst.host_partition[c].len().max(1);
        let dens0 = if ng == 0 {
            1.0
        } else {
            full.iter().map(|p| p.edge_count() as f64 / (p.left_len().max(1) * n) as f64).sum::<f64>() / ng as f64
        };
        let mut slots = vec![self.slot(SlotSide::Centre, c, dens0)];
        let mut candidacy: Vec<Vec<BipartitePair>> = full.into_iter().map(|p| vec![p]).collect();
        let nbrs: Vec<usize> = self.inst.reduced.neighbours(c).collect();
        for &j in nbrs.iter().filter(|&&j| !self.processed[j]) {
            slots.push(self.slot(SlotSide::A, j, self.density_a(j)));
            for g in 0..ng {
                candidacy[g].push(self.cand_a[g][j].clone());
            }
        }
        for &j in &nbrs {
            slots.push(self.slot(SlotSide::B, j, self.density_b(j)));
            for g in 0..ng {
                candidacy[g].push(self.cand_b[g][j].clone());
            }
        }
        let mut reduced = Graph::new(slots.len());
        for a in 1..slots.len() {
            for b in a + 1..slots.len() {
                if slots[a].side == SlotSide::A
                    && slots[b].side == SlotSide::A
                    && self.inst.reduced.has_edge(slots[a].cluster, slots[b].cluster)
                {
                    let _ = reduced.add_edge(a, b);
                }
            }
        }
        let plus = vec![vec![Vec::new(); slots.len()]; ng];
        PackingInstance {
            guests: self.guests.clone(),
            host_a: self.ga.clone(),
            host_b: self.gb.clone(),
            slots,
            reduced,
            candidacy,
            labelling: self.labelling.clone(),
            d_a: self.d_a,
            d_b: self.d_b,
            plus,
        }
    }

    fn edges_of(&self, cands: &[Vec<BipartitePair>], i: usize) -> Vec<[usize; 3]> {
        let vs = &self.inst.host_partition[i];
        let mut out = Vec::new();
        for (g, per) in cands.iter().enumerate() {
            let xs = &self.inst.guest_partitions[g][i];
            for (a, b) in per[i].edges() {
                out.push([g, xs[a], vs[b]]);
            }
        }
        out
    }

    /// Items (a)–(h) of the induction statement for the current state.
    fn state_checks(&self, set_testers: &[SetTester], vertex_testers: &[VertexTester], seed: u64) -> Vec<CheckRow> {
        let r = self.r();
        let ng = self.guests.len();
        let unprocessed: Vec<usize> = (1..=r).filter(|&i| !self.processed[i]).collect();
        let mut rows = Vec::new();

        // (a) tracked candidacy graphs.
        let jobs: Vec<(char, usize, usize)> = (1..=r)
            .flat_map(|i| (0..ng).flat_map(move |g| [('A', g, i), ('B', g, i)]))
            .filter(|&(z, _, i)| z == 'B' || !self.processed[i])
            .collect();
        let fails: Vec<[usize; 3]> = jobs
            .par_iter()
            .filter_map(|&(z, g, i)| {
                let (p, d) = if z == 'A' { (&self.cand_a[g][i], self.density_a(i)) } else { (&self.cand_b[g][i], self.density_b(i)) };
                if p.left_len() == 0 || p.right_len() == 0 {
                    return None;
                }
                let eps = self.sched.check(self.c_of(i));
                let ok = super_regularity_verdict(p, eps, d.clamp(0.0, 1.0), Method::auto(p.left_len() + p.right_len()))
                    .map(|v| v.accepted)
                    .unwrap_or(false);
                (!ok).then_some([(z == 'B') as usize, g, i])
            })
            .collect();
        let mut a = check("a", fails.len() as f64, 0.0, fails.is_empty());
        if !fails.is_empty() {
            a.detail = Some(serde_json::json!({ "failing": fails.iter().take(16).collect::<Vec<_>>(), "checked": jobs.len() }));
        }
        rows.push(a);

        // (b), (c) label degree and codegree.
        let mut worst_b: Option<(f64, f64)> = None;
        let mut worst_c = 0usize;
        let mut n_max = 0usize;
        for &i in &unprocessed {
            let edges = self.edges_of(&self.cand_a, i);
            let n = self.inst.host_partition[i].len();
            n_max = n_max.max(n);
            let deg = psi_degree(&self.labelling, &edges) as f64;
            let bound = (1.0 + self.sched.eps(self.c_of(i))) * self.density_a(i) * n as f64;
            if worst_b.map_or(true, |(d, b)| deg - bound > d - b) {
                worst_b = Some((deg, bound));
            }
            worst_c = worst_c.max(psi_codegree(&self.labelling, &edges));
        }
        let (db, bb) = worst_b.unwrap_or((0.0, 0.0));
        rows.push(check("b", db, bb, db <= bb + 1e-9));
        let cb = (n_max as f64).sqrt();
        rows.push(check("c", worst_c as f64, cb, worst_c as f64 <= cb + 1e-9));

        // (d) triple intersections on sampled host edges.
        let mut r2 = rng::child(seed, &[0xD]);
        let mut worst_d = 0.0f64;
        let mut bound_d = self.sched.check(0);
        for (i, j) in self.inst.reduced.edges() {
            if self.processed[i] || self.processed[j] {
                continue;
            }
            let target = self.density_a(i) * self.density_a(j);
            let eps = self.sched.check(self.c_of(i).max(self.c_of(j)));
            let (vi, vj) = (&self.inst.host_partition[i], &self.inst.host_partition[j]);
            for g in 0..ng {
                let h = &self.guests[g];
                let pairs: Vec<(usize, usize)> = self.inst.guest_partitions[g][i]
                    .iter()
                    .enumerate()
                    .flat_map(|(a, &x)| h.neighbours(x).map(move |y| (a, y)))
                    .filter(|&(_, y)| self.pos[g][y].0 == j)
                    .map(|(a, y)| (a, self.pos[g][y].1))
                    .collect();
                if pairs.is_empty() {
                    continue;
                }
                for _ in 0..self.cfg.triple_samples {
                    let (bi, bj) = (r2.gen_range(0..vi.len()), r2.gen_range(0..vj.len()));
                    if !self.ga.has_edge(vi[bi], vj[bj]) {
                        continue;
                    }
                    let c = pairs
                        .iter()
                        .filter(|&&(a, b)| self.cand_a[g][i].has_edge(a, bi) && self.cand_a[g][j].has_edge(b, bj))
                        .count() as f64;
                    let dev = (c / pairs.len() as f64 - target).abs();
                    if dev - eps > worst_d - bound_d {
                        worst_d = dev;
                        bound_d = eps;
                    }
                }
            }
        }
        rows.push(check("d", worst_d, bound_d, worst_d <= bound_d + 1e-9));

        // (e) images of embedded vertices with unembedded neighbours; recorded only.
        let hn = self.inst.host.vertex_count();
        let mut touched = vec![0usize; hn];
        for g in 0..ng {
            let h = &self.guests[g];
            for (x, v) in self.phi[g].iter().enumerate() {
                let Some(v) = v else { continue };
                if self.pos[g][x].0 == 0 {
                    continue;
                }
                if h.neighbours(x).any(|y| self.phi[g][y].is_none()) {
                    touched[*v] += 1;
                }
            }
        }
        let mut worst_e: Option<(f64, f64)> = None;
        for i in (1..=r).filter(|&i| self.processed[i]) {
            let bound = self.sched.eps(self.c_of(i)).sqrt() * self.inst.host_partition[i].len() as f64;
            for &v in &self.inst.host_partition[i] {
                let m = touched[v] as f64;
                if worst_e.map_or(true, |(a, b)| m - bound > a - b) {
                    worst_e = Some((m, bound));
                }
            }
        }
        let (me, be) = worst_e.unwrap_or((0.0, 0.0));
        let mut e = check("e", me, be, me <= be + 1e-9);
        e.enforced = false;
        rows.push(e);

        // (f) weighted candidacy degrees at vertex testers of unprocessed clusters.
        let mut worst_f: Option<(f64, f64)> = None;
        let mut detail_f = None;
        for t in vertex_testers.iter().filter(|t| t.cluster <= r && !self.processed[t.cluster] && t.cluster > 0) {
            let i = t.cluster;
            let vs = &self.inst.host_partition[i];
            let Some(b) = vs.iter().position(|&u| u == t.v) else { continue };
            let mut value = 0.0;
            let mut total = 0.0;
            for g in 0..ng {
                let xs = &self.inst.guest_partitions[g][i];
                for (a, &x) in xs.iter().enumerate() {
                    let w = t.weight.eval(&self.guests, g, x);
                    total += w;
                    if self.cand_a[g][i].has_edge(a, b) {
                        value += w;
                    }
                }
            }
            let target = self.density_a(i) * total;
            let tol = self.sched.check(self.c_of(i)) * target + self.cfg.tol * vs.len() as f64;
            let dev = (value - target).abs();
            if worst_f.map_or(true, |(d, tl)| dev - tol > d - tl) {
                worst_f = Some((dev, tol));
                detail_f = Some(serde_json::json!({ "cluster": i, "v": t.v, "value": value, "target": target }));
            }
        }
        let (df, tf) = worst_f.unwrap_or((0.0, 0.0));
        let mut f = check("f", df, tf, df <= tf + 1e-9);
        f.detail = detail_f;
        rows.push(f);

        // (g) set testers and (h) vertex testers of processed clusters.
        let mut inverse: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); ng];
        for g in 0..ng {
            for (x, v) in self.phi[g].iter().enumerate() {
                if let Some(v) = v {
                    inverse[g].insert(*v, x);
                }
            }
        }
        let half = self.cfg.alpha / 2.0;
        let mut worst_g: Option<(f64, f64)> = None;
        for t in set_testers.iter().filter(|t| t.cluster <= r && self.processed[t.cluster]) {
            let n = self.inst.host_partition[t.cluster].len() as f64;
            let value = t
                .w
                .iter()
                .filter(|v| t.ys.iter().all(|(g, ys)| inverse[*g].get(v).map_or(false, |x| ys.contains(x))))
                .count() as f64;
            let dev = (value - t.target(n)).abs();
            if worst_g.map_or(true, |(d, b)| dev - half * n > d - b) {
                worst_g = Some((dev, half * n));
            }
        }
        let (dg, bg) = worst_g.unwrap_or((0.0, 0.0));
        rows.push(check("g", dg, bg, dg <= bg + 1e-9));
        let mut worst_h: Option<(f64, f64)> = None;
        for t in vertex_testers.iter().filter(|t| t.cluster <= r && t.cluster > 0 && self.processed[t.cluster]) {
            let i = t.cluster;
            let n = self.inst.host_partition[i].len() as f64;
            let mut value = 0.0;
            let mut total = 0.0;
            for g in 0..ng {
                total += t.weight.total(&self.guests, g, &self.inst.guest_partitions[g][i]);
                if let Some(&x) = inverse[g].get(&t.v) {
                    value += t.weight.eval(&self.guests, g, x);
                }
            }
            let dev = (value - total / n).abs();
            if worst_h.map_or(true, |(d, b)| dev - half * n > d - b) {
                worst_h = Some((dev, half * n));
            }
        }
        let (dh, bh) = worst_h.unwrap_or((0.0, 0.0));
        rows.push(check("h", dh, bh, dh <= bh + 1e-9));
        rows
    }

    fn entry(&self, t: usize, cluster: Option<usize>, set_testers: &[SetTester], vertex_testers: &[VertexTester]) -> LedgerEntry {
        let r = self.r();
        LedgerEntry {
            t,
            cluster,
            colour: cluster.map(|c| self.colour[c]),
            eps_in: None,
            c: (0..=r).map(|i| if i == 0 { 0 } else { self.c_of(i) }).collect(),
            m: (0..=r).map(|i| if i == 0 { 0 } else { self.m_of(i) }).collect(),
            checks: self.state_checks(set_testers, vertex_testers, rng::derive(self.cfg.seed, &[0xC4EC, t as u64])),
            embedded: self.embedded(),
            step: None,
            census: None,
            census_error: None,
        }
    }
}

/// Host edges used by the guest edges whose ends are both embedded.
fn used_graph(guests: &[Graph], phi: &[Vec<Option<usize>>], nv: usize) -> Graph {
    let mut used = Graph::new(nv);
    for (h, m) in guests.iter().zip(phi) {
        for (x, y) in h.edges() {
            if let (Some(u), Some(v)) = (m[x], m[y]) {
                let _ = used.add_edge(u, v);
            }
        }
    }
    used
}

/// Embeds every leftover guest vertex, guest by guest, into the free host
/// vertices of its cluster group using host edges no other guest has taken.
/// Each group is a set of clusters whose union a vertex may move within.
fn completion(
    inst: &BlowUpInstance,
    groups: &[Vec<usize>],
    gb: &Graph,
    phi: &mut [Vec<Option<usize>>],
    cfg: &PipelineConfig,
) -> Result<CompletionReport> {
    let nv = inst.host.vertex_count();
    let group_guest: Vec<Vec<Vec<usize>>> = inst
        .guest_partitions
        .iter()
        .map(|parts| groups.iter().map(|ks| ks.iter().flat_map(|&k| parts[k].iter().copied()).collect()).collect())
        .collect();
    let group_host: Vec<Vec<usize>> =
        groups.iter().map(|ks| ks.iter().flat_map(|&k| inst.host_partition[k].iter().copied()).collect()).collect();
    let mut used = used_graph(&inst.guests, phi, nv);
    let pos = guest_positions(inst);
    let mut report = CompletionReport {
        leftovers_before: phi.iter().map(|m| m.iter().filter(|v| v.is_none()).count()).sum(),
        ..CompletionReport::default()
    };
    for g in 0..inst.guests.len() {
        let h = &inst.guests[g];
        let mut done = false;
        let mut last_err = None;
        for attempt in 0..cfg.completion_retries.max(1) {
            let widened = attempt > 0;
            let mu = (cfg.mu * 1.5f64.powi(attempt.saturating_sub(1) as i32)).min(1.0);
            let mut r = rng::child(cfg.seed, &[0xC0, g as u64, attempt as u64]);
            let mut in_w = vec![false; h.vertex_count()];
            let mut leftovers = 0;
            let mut high_count = 0;
            for (xs, vs) in group_guest[g].iter().zip(&group_host) {
                let mut embedded: Vec<usize> = Vec::new();
                for &x in xs {
                    if phi[g][x].is_none() {
                        in_w[x] = true;
                        leftovers += 1;
                    } else {
                        embedded.push(x);
                    }
                }
                if xs.is_empty() {
                    continue;
                }
                let k = (mu * embedded.len() as f64).ceil() as usize;
                embedded.shuffle(&mut r);
                for &x in embedded.iter().take(k) {
                    in_w[x] = true;
                }
                let hi = (cfg.mu.powf(1.5) * vs.len() as f64).ceil() as usize;
                let mut by_deg = vs.clone();
                by_deg.sort_by_key(|&v| (std::cmp::Reverse(used.degree(v)), v));
                let inv: BTreeMap<usize, usize> = xs.iter().filter_map(|&x| phi[g][x].map(|v| (v, x))).collect();
                for v in by_deg.into_iter().take(hi) {
                    if let Some(&x) = inv.get(&v) {
                        if !in_w[x] {
                            in_w[x] = true;
                            high_count += 1;
                        }
                    }
                }
            }
            // Neighbours of leftovers are re-embedded too, so a leftover never
            // faces all of its neighbours fixed.
            let mut near = 0;
            for x in 0..h.vertex_count() {
                if phi[g][x].is_none() {
                    for y in h.neighbours(x) {
                        if pos[g][y].0 != 0 && !in_w[y] {
                            in_w[y] = true;
                            near += 1;
                        }
                    }
                }
            }
            // Release the edges this guest used at the vertices being re-embedded.
            let mut released = used.clone();
            for (x, y) in h.edges() {
                if in_w[x] || in_w[y] {
                    if let (Some(u), Some(v)) = (phi[g][x], phi[g][y]) {
                        released.remove_edge(u, v);
                    }
                }
            }
            let base = if widened { &inst.host } else { gb };
            let avail = base.minus(&released);
            let mut guest_parts = Vec::new();
            let mut host_parts = Vec::new();
            let mut candidates = Vec::new();
            let mut min_cand = usize::MAX;
            let mut w_size = 0;
            for (all, vs) in group_guest[g].iter().zip(&group_host) {
                let xs: Vec<usize> = all.iter().copied().filter(|&x| in_w[x]).collect();
                if xs.is_empty() {
                    continue;
                }
                let taken: Vec<usize> = all
                    .iter()
                    .filter(|&&x| !in_w[x])
                    .filter_map(|&x| phi[g][x])
                    .collect();
                let taken = bitset_of(nv, taken);
                let free: Vec<usize> = vs.iter().copied().filter(|&v| !taken.contains(v)).collect();
                let mut p = BipartitePair::empty(xs.len(), free.len());
                for (a, &x) in xs.iter().enumerate() {
                    let fixed: Vec<usize> = h
                        .neighbours(x)
                        .filter(|&y| !in_w[y] || pos[g][y].0 == 0)
                        .filter_map(|y| phi[g][y])
                        .collect();
                    for (b, &v) in free.iter().enumerate() {
                        if fixed.iter().all(|&u| avail.has_edge(u, v)) {
                            p.add_edge(a, b);
                        }
                    }
                    min_cand = min_cand.min(p.left_degree(a));
                }
                w_size += xs.len();
                guest_parts.push(xs);
                host_parts.push(free);
                candidates.push(p);
            }
            if guest_parts.is_empty() {
                done = true;
                break;
            }
            let task = EmbeddingTask { guest: h.clone(), host: avail, guest_parts, host_parts, candidates };
            let params = EmbedParams {
                seed: rng::derive(cfg.seed, &[0xE3B, g as u64, attempt as u64]),
                max_backtrack: cfg.max_backtrack,
                restarts: cfg.restarts,
                exhaustive_limit: 8,
            };
            let mut row = CompletionRow {
                guest: g,
                attempt,
                mu,
                widened,
                w_size,
                leftovers,
                high_vertices: high_count,
                leftover_neighbours: near,
                min_candidates: if min_cand == usize::MAX { 0 } else { min_cand },
                success: false,
                error: None,
            };
            match embed_single(&task, &params) {
                Ok(psi) => {
                    for (&x, &v) in &psi {
                        phi[g][x] = Some(v);
                    }
                    used = released;
                    for (x, y) in h.edges() {
                        if in_w[x] || in_w[y] {
                            let (u, v) = (phi[g][x].unwrap(), phi[g][y].unwrap());
                            let _ = used.add_edge(u, v);
                            report.edges_added += 1;
                            if !gb.has_edge(u, v) {
                                report.edges_outside_slice += 1;
                            }
                        }
                    }
                    row.success = true;
                    report.rows.push(row);
                    done = true;
                    break;
                }
                Err(e) => {
                    row.error = Some(e.to_string());
                    last_err = Some(e);
                    report.rows.push(row);
                }
            }
        }
        if !done {
            let msg = last_err.map_or_else(|| "no attempt made".to_string(), |e| e.to_string());
            return Err(Error::Stage { stage: "completion".into(), message: format!("guest {g}: {msg}") });
        }
    }
    Ok(report)
}

/// Packs an instance whose guest pairs across reduced edges are matchings.
/// Returns the packing together with the induction ledger.
pub fn pack_matching_case(
    inst: &BlowUpInstance,
    testers: &TesterSuite,
    cfg: &PipelineConfig,
) -> Result<PackingResult> {
    let groups: Vec<Vec<usize>> = (1..=inst.r()).map(|i| vec![i]).collect();
    matching_case(inst, testers, cfg, &groups)
}

/// The matching case with completion running over `groups` of clusters.
fn matching_case(
    inst: &BlowUpInstance,
    testers: &TesterSuite,
    cfg: &PipelineConfig,
    groups: &[Vec<usize>],
) -> Result<PackingResult> {
    cfg.validate()?;
    inst.check_structure()?;
    let mut clock = Clock::new();
    let ng = inst.guests.len();
    let r = inst.r();
    let phi0 = inst.phi0_maps();
    let mut phi: Vec<Vec<Option<usize>>> = phi0.clone();
    if ng == 0 {
        let result = PackingResult { phi: Vec::new(), report: PipelineReport::default(), timings: Vec::new() };
        return Ok(finish(result, inst, testers, cfg, "matching", clock));
    }
    let d = cfg.density.unwrap_or_else(|| measured_density(inst));
    let (ga, gb, eps0, slice_rows, slice_attempts) = split_slices(inst, cfg, d);
    clock.lap("slices");
    let (d_a, d_b) = ((1.0 - cfg.gamma) * d, cfg.gamma * d);
    let mut init_a = initial_candidacy(inst, &ga, &phi0);
    let mut init_b = initial_candidacy(inst, &gb, &phi0);
    let alpha_a = sparsify(&mut init_a, rng::derive(cfg.seed, &[0xA]), cfg.sparsify);
    let alpha_b = sparsify(&mut init_b, rng::derive(cfg.seed, &[0xB]), cfg.sparsify);
    let mut labelling = EdgeSetLabelling::new();
    for g in 0..ng {
        let h = &inst.guests[g];
        for xs in inst.guest_partitions[g].iter().skip(1) {
            for &x in xs {
                let us: Vec<usize> = h.neighbours(x).filter_map(|y| phi0[g][y]).collect();
                labelling.set_anchors(g, x, us);
            }
        }
    }
    let (colour, order) = colour_schedule(&inst.reduced);
    let mut ledger = InductionLedger {
        density: d,
        eps0,
        d_a,
        d_b,
        alpha_a: alpha_a.clone(),
        alpha_b: alpha_b.clone(),
        colours: colour.clone(),
        order: order.clone(),
        colouring_rows: colouring_rows(&inst.reduced, &colour, &order),
        slice_rows,
        slice_attempts,
        ..InductionLedger::default()
    };
    let mut case = Case {
        inst,
        cfg,
        sched: Schedule { eps0, kappa: cfg.kappa, slack: cfg.eps_slack },
        guests: Arc::new(inst.guests.clone()),
        ga: Arc::new(ga),
        gb: Arc::new(gb),
        pos: guest_positions(inst),
        cand_a: init_a.clone(),
        cand_b: init_b,
        init_a,
        alpha_a,
        alpha_b,
        d_a,
        d_b,
        phi: phi.clone(),
        labelling,
        processed: vec![false; r + 1],
        colour,
    };
    let by_cluster = |c: usize| -> (Vec<SetTester>, Vec<VertexTester>) {
        (
            testers.set_testers.iter().filter(|t| t.cluster == c).cloned().collect(),
            testers.vertex_testers.iter().filter(|t| t.cluster == c).cloned().collect(),
        )
    };
    let initial = case.entry(0, None, &testers.set_testers, &testers.vertex_testers);
    if cfg.strict && !initial.holds() {
        return Err(Error::Step(format!("initial state fails: {:?}", initial.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>())));
    }
    ledger.entries.push(initial);
    clock.lap("candidacy");

    for (t, &c) in order.iter().enumerate() {
        let step_seed = rng::derive(cfg.seed, &[0x57E9, t as u64]);
        let mut pinst = case.build_step(c);
        pinst.enlarge(rng::derive(step_seed, &[1]));
        let eps_in = case.sched.eps(case.c_of(c)).min(0.95 / cfg.eps_slack.max(1.0));
        let (census, census_error) = match niceify(&pinst, eps_in) {
            Ok((_, census)) => (Some(census), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let mut params = StepParams::new(eps_in, rng::derive(step_seed, &[2]));
        params.eps_slack = cfg.eps_slack;
        params.tol = cfg.tol;
        params.degenerate_eps = cfg.pad_eps;
        params.retries = cfg.step_retries;
        params.strict = cfg.strict;
        params.weight_cap = cfg.weight_cap;
        params.triple_samples = cfg.triple_samples;
        let (sts, vts) = by_cluster(c);
        let edge_testers: Vec<EdgeTester> = vts
            .iter()
            .map(|vt| {
                let b = inst.host_partition[c].iter().position(|&u| u == vt.v);
                let mut weights = Vec::new();
                if let Some(b) = b {
                    for g in 0..ng {
                        for (a, &x) in inst.guest_partitions[g][c].iter().enumerate() {
                            let w = vt.weight.eval(&inst.guests, g, x);
                            if w > 0.0 && pinst.candidacy[g][0].has_edge(a, b) {
                                weights.push(([g, x, vt.v], w));
                            }
                        }
                    }
                }
                EdgeTester { slot: 0, weights }
            })
            .collect();
        let outcome = approximate_pack_step(&pinst, &sts, &edge_testers, &params)
            .map_err(|e| e.in_stage(&format!("step {t} (cluster {c})")))?;
        // Extension: σ only touches vertices of cluster c, none embedded before.
        for (g, sigma) in outcome.packing.sigma.iter().enumerate() {
            for (&x, &v) in sigma {
                if case.phi[g][x].is_some() || case.pos[g][x].0 != c {
                    return Err(Error::Structure(format!("step {t}: guest {g} vertex {x} is not new in cluster {c}")));
                }
                case.phi[g][x] = Some(v);
            }
        }
        for (k, slot) in pinst.slots.iter().enumerate().skip(1) {
            for g in 0..ng {
                let p = outcome.candidacy[g][k].clone();
                match slot.side {
                    SlotSide::A => case.cand_a[g][slot.cluster] = p,
                    SlotSide::B => case.cand_b[g][slot.cluster] = p,
                    SlotSide::Centre => {}
                }
            }
        }
        case.labelling = outcome.labelling;
        let m_before: Vec<usize> = (0..=r).map(|i| if i == 0 { 0 } else { case.m_of(i) }).collect();
        case.processed[c] = true;
        for i in inst.reduced.neighbours(c) {
            if case.m_of(i) != m_before[i] + 1 {
                return Err(Error::Structure(format!("step {t}: m_{i} did not advance by one")));
            }
        }
        let (_, _) = (&sts, &vts);
        let mut entry = case.entry(t + 1, Some(c), &testers.set_testers, &testers.vertex_testers);
        entry.eps_in = Some(eps_in);
        entry.step = Some(outcome.report);
        entry.census = census;
        entry.census_error = census_error;
        if cfg.strict && !entry.holds() {
            let failed: Vec<&CheckRow> = entry.checks.iter().filter(|c| !c.passed && c.enforced).collect();
            return Err(Error::Step(format!("state after step {t} fails: {}", serde_json::to_string(&failed).unwrap_or_default())));
        }
        ledger.entries.push(entry);
        if cfg.snapshots {
            ledger.snapshots.push(Snapshot { t: t + 1, phi: pairs_of(&case.phi) });
        }
    }
    clock.lap("steps");
    phi.clone_from(&case.phi);

    // Every edge placed so far lies in the packing slice.
    let mut first = None;
    for (g, h) in inst.guests.iter().enumerate() {
        for (x, y) in h.edges() {
            if let (Some(u), Some(v)) = (phi[g][x], phi[g][y]) {
                if !case.ga.has_edge(u, v) && first.is_none() {
                    first = Some(serde_json::json!({ "guest": g, "edge": [x, y], "image": [u, v] }));
                }
            }
        }
    }
    ledger.provenance.push(crow("steps-use-slice-a", first));
    let gb = case.gb.clone();
    drop(case);
    ledger.completion = completion(inst, groups, &gb, &mut phi, cfg)?;
    ledger.provenance.push(crow(
        "completion-uses-slice-b",
        (ledger.completion.edges_outside_slice > 0)
            .then(|| serde_json::json!({ "edges_outside": ledger.completion.edges_outside_slice })),
    ));
    clock.lap("completion");
    let result = PackingResult {
        phi: pairs_of(&phi),
        report: PipelineReport { ledger, ..PipelineReport::default() },
        timings: Vec::new(),
    };
    Ok(finish(result, inst, testers, cfg, "matching", clock))
}

fn finish(mut result: PackingResult, inst: &BlowUpInstance, testers: &TesterSuite, cfg: &PipelineConfig, mode: &str, mut clock: Clock) -> PackingResult {
    result.report.mode = mode.into();
    result.report.verification = verify_result(&result, inst, testers, cfg.alpha);
    clock.lap("verify");
    result.timings.extend(clock.0);
    result
}

// ---------------------------------------------------------------------------
// Refinement front end

/// Index of refined cluster `(i, j)`, `i ≥ 1`.
fn refined_index(i: usize, j: usize, p: usize) -> usize {
    1 + (i - 1) * p + j
}

fn refine_guests(
    inst: &BlowUpInstance,
    testers: &TesterSuite,
    cfg: &PipelineConfig,
) -> Result<(crate::splitter::RefinedPartition, SplitReport, usize, Vec<usize>)> {
    let clusters: Vec<Vec<Vec<usize>>> = inst.guest_partitions.iter().map(|p| p[1..].to_vec()).collect();
    let weights: Vec<Weight> = {
        let mut w: Vec<Weight> = Vec::new();
        for t in &testers.vertex_testers {
            if !w.contains(&t.weight) {
                w.push(t.weight.clone());
            }
        }
        w
    };
    let range: Vec<usize> = match cfg.parts {
        Some(p) => vec![p],
        None => (2..=cfg.max_parts).collect(),
    };
    let mut tried = Vec::new();
    let mut last_err = None;
    for p in range {
        tried.push(p);
        let mut sc = SplitConfig::new(p, rng::derive(cfg.seed, &[0x5A17, p as u64]));
        sc.max_retries = cfg.split_retries;
        match refine_collection(&inst.guests, &clusters, &sc, &weights) {
            Ok((rp, rep)) => return Ok((rp, rep, p, tried)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Config("no part count to try".into())))
}

/// Random host refinement with the sub-cluster sizes of the guests; retried
/// until every tester set and neighbourhood splits within `β^{3/2} n`.
fn refine_host(
    inst: &BlowUpInstance,
    sizes: &[Vec<usize>],
    testers: &TesterSuite,
    cfg: &PipelineConfig,
    p: usize,
) -> Result<(Vec<Vec<Vec<usize>>>, usize, f64, f64)> {
    let beta = 1.0 / p as f64;
    let n = inst.host_partition.iter().skip(1).map(|v| v.len()).sum::<usize>() as f64 / inst.r().max(1) as f64;
    let tol = beta.powf(1.5) * n;
    let nv = inst.host.vertex_count();
    let mut best: Option<(f64, Vec<Vec<Vec<usize>>>)> = None;
    let mut attempts = 0;
    for attempt in 0..cfg.host_retries.max(1) {
        attempts += 1;
        let mut r = rng::child(cfg.seed, &[0x4057, attempt as u64]);
        let mut out = vec![Vec::new()];
        let mut worst = 0.0f64;
        for i in 1..=inst.r() {
            let mut vs = inst.host_partition[i].clone();
            vs.shuffle(&mut r);
            let mut parts = Vec::with_capacity(p);
            let mut k = 0;
            for &s in &sizes[i] {
                parts.push(vs[k..k + s].to_vec());
                k += s;
            }
            let total = inst.host_partition[i].len() as f64;
            let masks: Vec<FixedBitSet> = parts.iter().map(|q| bitset_of(nv, q.iter().copied())).collect();
            let whole = bitset_of(nv, inst.host_partition[i].iter().copied());
            let mut dev = |set: &FixedBitSet| {
                let all = set.intersection_count(&whole) as f64;
                for (q, m) in parts.iter().zip(&masks) {
                    let d = (set.intersection_count(m) as f64 - q.len() as f64 / total * all).abs();
                    worst = worst.max(d);
                }
            };
            for t in testers.set_testers.iter().filter(|t| t.cluster == i) {
                dev(&bitset_of(nv, t.w.iter().copied()));
            }
            for u in 0..nv {
                dev(inst.host.neighbour_set(u));
            }
            out.push(parts);
        }
        if best.as_ref().map_or(true, |b| worst < b.0) {
            best = Some((worst, out));
        }
        if worst <= tol + 1e-9 {
            break;
        }
    }
    let (worst, parts) = best.unwrap();
    if worst > tol + 1e-9 {
        return Err(Error::RetryExhausted(format!(
            "host refinement: deviation {worst:.2} above {tol:.2} after {attempts} attempts"
        )));
    }
    Ok((parts, attempts, worst, tol))
}

/// Adds artificial edges so that every refined guest pair across `R′`
/// carries at least `target` edges; low-degree vertices go first. Returns
/// the number of edges added.
fn pad_pairs(guests: &mut [Graph], parts: &[Vec<Vec<usize>>], reduced: &Graph, target: usize) -> usize {
    let mut added = 0;
    for (h, parts) in guests.iter_mut().zip(parts) {
        let nv = h.vertex_count();
        for (a, b) in reduced.edges() {
            let (xa, xb) = (&parts[a], &parts[b]);
            let (ma, mb) = (bitset_of(nv, xa.iter().copied()), bitset_of(nv, xb.iter().copied()));
            let have: usize = xa.iter().map(|&x| h.degree_into(x, &mb)).sum();
            if have >= target {
                continue;
            }
            let mut fa: Vec<usize> = xa.iter().copied().filter(|&x| h.degree_into(x, &mb) == 0).collect();
            let mut fb: Vec<usize> = xb.iter().copied().filter(|&y| h.degree_into(y, &ma) == 0).collect();
            fa.sort_by_key(|&x| (h.degree(x), x));
            fb.sort_by_key(|&y| (h.degree(y), y));
            for (&x, &y) in fa.iter().zip(&fb).take(target - have) {
                if h.add_edge(x, y).unwrap_or(false) {
                    added += 1;
                }
            }
        }
    }
    added
}

/// Builds the refined, padded matching-case instance of an extended instance.
fn refined_instance(
    inst: &BlowUpInstance,
    testers: &TesterSuite,
    cfg: &PipelineConfig,
) -> Result<(BlowUpInstance, TesterSuite, SplitReport, RefinementReport)> {
    let (rp, split, p, tried) = refine_guests(inst, testers, cfg).map_err(|e| e.in_stage("split"))?;
    let r = inst.r();
    let sizes: Vec<Vec<usize>> = (0..=r)
        .map(|i| if i == 0 { Vec::new() } else { rp.parts[0][i - 1].iter().map(|s| s.len()).collect() })
        .collect();
    for (g, per) in rp.parts.iter().enumerate() {
        for i in 1..=r {
            let s: Vec<usize> = per[i - 1].iter().map(|s| s.len()).collect();
            if s != sizes[i] {
                return Err(Error::Structure(format!("guest {g}: sub-cluster sizes of cluster {i} differ from guest 0")));
            }
        }
    }
    let (host_parts, host_attempts, host_dev, host_tol) =
        refine_host(inst, &sizes, testers, cfg, p).map_err(|e| e.in_stage("host-refinement"))?;
    let rr = r * p;
    let mut host_partition = vec![inst.host_partition[0].clone()];
    for i in 1..=r {
        host_partition.extend(host_parts[i].iter().cloned());
    }
    let mut reduced = Graph::new(rr + 1);
    for (i, k) in inst.reduced.edges() {
        for a in 0..p {
            for b in 0..p {
                let _ = reduced.add_edge(refined_index(i, a, p), refined_index(k, b, p));
            }
        }
    }
    let guest_partitions: Vec<Vec<Vec<usize>>> = (0..inst.guests.len())
        .map(|g| {
            let mut out = vec![inst.guest_partitions[g][0].clone()];
            for i in 1..=r {
                out.extend(rp.parts[g][i - 1].iter().cloned());
            }
            out
        })
        .collect();
    let n = inst.host_partition.iter().skip(1).map(|v| v.len()).sum::<usize>() as f64 / r.max(1) as f64;
    let n_ref = n / p as f64;
    let beta = 1.0 / p as f64;
    let target = ((beta.powi(4) * n).ceil() as usize).max((cfg.pad_eps * cfg.pad_eps * n_ref).ceil() as usize);
    let mut guests = inst.guests.clone();
    let artificial = pad_pairs(&mut guests, &guest_partitions, &reduced, target);
    let refined = BlowUpInstance {
        guests,
        host: inst.host.clone(),
        reduced,
        guest_partitions,
        host_partition,
        phi0: inst.phi0.clone(),
    };
    refined.check_structure().map_err(|e| e.in_stage("refinement"))?;
    let lifted = lift_testers(testers, &refined, inst, p);
    let report = RefinementReport {
        parts: p,
        parts_tried: tried,
        host_attempts,
        host_max_deviation: host_dev,
        host_tolerance: host_tol,
        artificial_edges: artificial,
        padding_target: target,
    };
    Ok((refined, lifted, split, report))
}

/// Restricts every tester to the refined clusters of its cluster.
fn lift_testers(testers: &TesterSuite, refined: &BlowUpInstance, inst: &BlowUpInstance, p: usize) -> TesterSuite {
    let mut out = TesterSuite::default();
    for t in &testers.set_testers {
        if t.cluster == 0 || t.cluster > inst.r() {
            continue;
        }
        for j in 0..p {
            let k = refined_index(t.cluster, j, p);
            let vs = &refined.host_partition[k];
            let w: Vec<usize> = t.w.iter().copied().filter(|v| vs.contains(v)).collect();
            let ys = t
                .ys
                .iter()
                .map(|(g, ys)| {
                    let xs = &refined.guest_partitions[*g][k];
                    (*g, ys.iter().copied().filter(|y| xs.contains(y)).collect())
                })
                .collect();
            out.set_testers.push(SetTester { cluster: k, w, ys });
        }
    }
    let hc = refined.host_cluster_map();
    for t in &testers.vertex_testers {
        out.vertex_testers.push(VertexTester { cluster: hc[t.v], v: t.v, weight: t.weight.clone() });
    }
    out
}

/// Packs an extended blow-up instance. The result is verified against the
/// original instance and testers; artificial padding never shows up in it.
pub fn pack_extended(inst: &BlowUpInstance, testers: &TesterSuite, cfg: &PipelineConfig) -> Result<PackingResult> {
    cfg.validate()?;
    inst.check_structure()?;
    let mut clock = Clock::new();
    if inst.guests.is_empty() {
        let result = PackingResult::default();
        return Ok(finish(result, inst, testers, cfg, "extended", clock));
    }
    let (refined, lifted, split, refinement) = refined_instance(inst, testers, cfg)?;
    clock.lap("refine");
    // Completion may move vertices anywhere inside their original cluster.
    let p = refinement.parts;
    let groups: Vec<Vec<usize>> = (1..=inst.r()).map(|i| (0..p).map(|j| refined_index(i, j, p)).collect()).collect();
    let inner = matching_case(&refined, &lifted, cfg, &groups)?;
    let mut result = PackingResult {
        phi: inner.phi,
        report: PipelineReport {
            split: Some(split),
            refinement: Some(refinement),
            ledger: inner.report.ledger,
            ..PipelineReport::default()
        },
        timings: Vec::new(),
    };
    clock.absorb(inner.timings);
    result.timings = Vec::new();
    Ok(finish(result, inst, testers, cfg, "extended", clock))
}

/// The single-cluster instance a quasirandom packing is verified against:
/// guests padded with isolated vertices to the host order, everything in
/// cluster 1 and an empty exceptional cluster.
pub fn quasirandom_frame(host: &Graph, guests: &[Graph]) -> Result<BlowUpInstance> {
    let nv = host.vertex_count();
    let padded: Vec<Graph> = guests
        .iter()
        .map(|h| {
            if h.vertex_count() > nv {
                return Err(Error::Size(format!("guest with {} vertices exceeds host order {nv}", h.vertex_count())));
            }
            let mut g = Graph::new(nv);
            for (x, y) in h.edges() {
                g.add_edge(x, y)?;
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let whole: Vec<usize> = (0..nv).collect();
    Ok(BlowUpInstance {
        guest_partitions: vec![vec![Vec::new(), whole.clone()]; padded.len()],
        guests: padded,
        host: host.clone(),
        reduced: Graph::new(2),
        host_partition: vec![Vec::new(), whole],
        phi0: Vec::new(),
    })
}

/// Packs guests into a quasirandom host: the guests are padded with isolated
/// vertices to the host order, split into parts independent in `H²`, and the
/// host is cut into random parts of the same sizes with a complete reduced
/// graph. Testers use cluster 1 for the whole host.
pub fn pack_quasirandom(host: &Graph, guests: &[Graph], testers: &TesterSuite, cfg: &PipelineConfig) -> Result<PackingResult> {
    cfg.validate()?;
    let nv = host.vertex_count();
    let mut clock = Clock::new();
    let outer = quasirandom_frame(host, guests)?;
    let padded = outer.guests.clone();
    let whole: Vec<usize> = (0..nv).collect();
    if padded.is_empty() {
        return Ok(finish(PackingResult::default(), &outer, testers, cfg, "quasirandom", clock));
    }
    let clusters: Vec<Vec<Vec<usize>>> = vec![vec![whole.clone()]; padded.len()];
    let weights: Vec<Weight> = testers.vertex_testers.iter().map(|t| t.weight.clone()).collect();
    let range: Vec<usize> = match cfg.parts {
        Some(p) => vec![p],
        None => (2..=cfg.max_parts).collect(),
    };
    let mut chosen = None;
    let mut tried = Vec::new();
    for p in range {
        tried.push(p);
        let mut sc = SplitConfig::new(p, rng::derive(cfg.seed, &[0x5A17, p as u64]));
        sc.max_retries = cfg.split_retries;
        if let Ok((rp, rep)) = refine_collection(&padded, &clusters, &sc, &weights) {
            if rep.rows.iter().any(|r| r.condition == crate::splitter::COND_INDEPENDENT && !r.passed) {
                continue;
            }
            chosen = Some((rp, rep, p));
            break;
        }
    }
    let (rp, split, p) = chosen.ok_or_else(|| Error::Stage {
        stage: "split".into(),
        message: format!("no part count in {tried:?} gives square-independent parts"),
    })?;
    let sizes: Vec<usize> = rp.parts[0][0].iter().map(|s| s.len()).collect();
    let mut r = rng::child(cfg.seed, &[0x9A27]);
    let mut vs = whole.clone();
    vs.shuffle(&mut r);
    let mut host_partition = vec![Vec::new()];
    let mut k = 0;
    for &s in &sizes {
        host_partition.push(vs[k..k + s].to_vec());
        k += s;
    }
    let mut reduced = Graph::new(p + 1);
    for a in 1..=p {
        for b in a + 1..=p {
            let _ = reduced.add_edge(a, b);
        }
    }
    let guest_partitions: Vec<Vec<Vec<usize>>> = rp
        .parts
        .iter()
        .map(|per| std::iter::once(Vec::new()).chain(per[0].iter().cloned()).collect())
        .collect();
    let target = (cfg.pad_eps * cfg.pad_eps * nv as f64 / p as f64).ceil() as usize;
    let mut inner_guests = padded.clone();
    let artificial = pad_pairs(&mut inner_guests, &guest_partitions, &reduced, target);
    let inner_inst = BlowUpInstance { guests: inner_guests, host: host.clone(), reduced, guest_partitions, host_partition, phi0: Vec::new() };
    inner_inst.check_structure().map_err(|e| e.in_stage("refinement"))?;
    let hc = inner_inst.host_cluster_map();
    let lifted = TesterSuite {
        set_testers: Vec::new(),
        vertex_testers: testers
            .vertex_testers
            .iter()
            .map(|t| VertexTester { cluster: hc[t.v], v: t.v, weight: t.weight.clone() })
            .collect(),
    };
    clock.lap("refine");
    // The host has edges inside every part, so leftovers may move anywhere.
    let inner = matching_case(&inner_inst, &lifted, cfg, &[(1..=p).collect()])?;
    clock.absorb(inner.timings);
    let result = PackingResult {
        phi: inner.phi,
        report: PipelineReport {
            split: Some(split),
            refinement: Some(RefinementReport {
                parts: p,
                parts_tried: tried,
                artificial_edges: artificial,
                padding_target: target,
                ..RefinementReport::default()
            }),
            ledger: inner.report.ledger,
            ..PipelineReport::default()
        },
        timings: Vec::new(),
    };
    // Guests are verified on their own vertex sets.
    let mut outer = outer;
    outer.guests = guests.to_vec();
    outer.guest_partitions = guests.iter().map(|h| vec![Vec::new(), (0..h.vertex_count()).collect()]).collect();
    let mut result = result;
    for (g, h) in guests.iter().enumerate() {
        result.phi[g].retain(|&[x, _]| x < h.vertex_count());
    }
    Ok(finish_quasi(result, &outer, testers, cfg, clock))
}

fn finish_quasi(mut result: PackingResult, outer: &BlowUpInstance, testers: &TesterSuite, cfg: &PipelineConfig, mut clock: Clock) -> PackingResult {
    result.report.mode = "quasirandom".into();
    let mut report = verify_result(&result, outer, testers, cfg.alpha);
    // With fewer guest vertices than host vertices the images are a subset.
    if let Some(row) = report.rows.iter_mut().find(|r| r.condition == CHECK_CLUSTERS) {
        let exact_sizes = outer.guests.iter().all(|h| h.vertex_count() == outer.host.vertex_count());
        if !exact_sizes {
            row.passed = true;
            row.counterexample = None;
        }
    }
    result.report.verification = report;
    clock.lap("verify");
    result.timings.extend(clock.0);
    result
}
