//! Extended blow-up instances: guests, host, reduced graph, aligned partitions
//! and the pre-embedding of the exceptional clusters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bitset_of, BipartitePair, Graph};
use crate::regularity::{super_regularity_verdict, Method, RegularityVerdict};

/// Cluster 0 is the exceptional cluster; clusters `1..=r` are the regular ones.
/// The reduced graph lives on `0..=r` and vertex 0 is never adjacent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUpInstance {
    pub guests: Vec<Graph>,
    pub host: Graph,
    pub reduced: Graph,
    /// `[guest][cluster]` → guest vertex ids.
    pub guest_partitions: Vec<Vec<Vec<usize>>>,
    /// `[cluster]` → host vertex ids.
    pub host_partition: Vec<Vec<usize>>,
    /// `[guest, x, v]`: guest vertex `x ∈ X_0` is pre-embedded onto `v ∈ V_0`.
    pub phi0: Vec<[usize; 3]>,
}

impl BlowUpInstance {
    pub fn r(&self) -> usize {
        self.host_partition.len().saturating_sub(1)
    }

    /// `cluster_of[guest][x]`.
    pub fn guest_cluster_maps(&self) -> Vec<Vec<usize>> {
        self.guests
            .iter()
            .zip(&self.guest_partitions)
            .map(|(h, parts)| {
                let mut c = vec![usize::MAX; h.vertex_count()];
                for (i, p) in parts.iter().enumerate() {
                    for &x in p {
                        c[x] = i;
                    }
                }
                c
            })
            .collect()
    }

    /// `cluster_of[v]` for host vertices.
    pub fn host_cluster_map(&self) -> Vec<usize> {
        let mut c = vec![usize::MAX; self.host.vertex_count()];
        for (i, p) in self.host_partition.iter().enumerate() {
            for &v in p {
                c[v] = i;
            }
        }
        c
    }

    /// `phi0_of[guest][x]`.
    pub fn phi0_maps(&self) -> Vec<Vec<Option<usize>>> {
        let mut m: Vec<Vec<Option<usize>>> =
            self.guests.iter().map(|h| vec![None; h.vertex_count()]).collect();
        for &[g, x, v] in &self.phi0 {
            if g < m.len() && x < m[g].len() {
                m[g][x] = Some(v);
            }
        }
        m
    }

    /// Checks the structural invariants; the error names the first violated one.
    pub fn check_structure(&self) -> Result<()> {
        let r = self.r();
        let err = |s: String| Err(Error::Structure(s));
        if self.host_partition.is_empty() {
            return err("host partition has no clusters".into());
        }
        if self.reduced.vertex_count() != r + 1 {
            return err(format!("reduced graph has {} vertices, expected {}", self.reduced.vertex_count(), r + 1));
        }
        if self.reduced.degree(0) != 0 {
            return err("reduced graph: exceptional index 0 must be isolated".into());
        }
        let hc = self.host_cluster_map();
        let mut seen = vec![false; self.host.vertex_count()];
        for p in &self.host_partition {
            for &v in p {
                if v >= seen.len() || seen[v] {
                    return err(format!("host partition: vertex {v} repeated or out of range"));
                }
                seen[v] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return err("host partition does not cover the host".into());
        }
        if self.guest_partitions.len() != self.guests.len() {
            return err("one guest partition per guest required".into());
        }
        let phi0 = self.phi0_maps();
        for &[g, x, v] in &self.phi0 {
            if g >= self.guests.len() || x >= self.guests[g].vertex_count() || v >= hc.len() {
                return err(format!("phi0 triple [{g},{x},{v}] out of range"));
            }
        }
        for (gi, (h, parts)) in self.guests.iter().zip(&self.guest_partitions).enumerate() {
            if parts.len() != r + 1 {
                return err(format!("guest {gi}: {} clusters, expected {}", parts.len(), r + 1));
            }
            let mut cl = vec![usize::MAX; h.vertex_count()];
            for (i, p) in parts.iter().enumerate() {
                for &x in p {
                    if x >= cl.len() || cl[x] != usize::MAX {
                        return err(format!("guest {gi}: vertex {x} repeated or out of range"));
                    }
                    cl[x] = i;
                }
            }
            if cl.iter().any(|&c| c == usize::MAX) {
                return err(format!("guest {gi}: partition does not cover the guest"));
            }
            for i in 1..=r {
                if parts[i].len() != self.host_partition[i].len() {
                    return err(format!(
                        "guest {gi}: |X_{i}| = {} but |V_{i}| = {}",
                        parts[i].len(),
                        self.host_partition[i].len()
                    ));
                }
            }
            if parts[0].len() > self.host_partition[0].len() {
                return err(format!("guest {gi}: exceptional cluster larger than V_0"));
            }
            for (i, p) in parts.iter().enumerate() {
                if !h.is_independent(p) {
                    return err(format!("guest {gi}: cluster {i} is not independent"));
                }
            }
            for (x, y) in h.edges() {
                let (a, b) = (cl[x], cl[y]);
                if a != 0 && b != 0 && !self.reduced.has_edge(a, b) {
                    return err(format!("guest {gi}: edge {x}-{y} joins clusters {a},{b} not adjacent in R"));
                }
            }
            let mut used = std::collections::HashSet::new();
            for &x in &parts[0] {
                match phi0[gi][x] {
                    None => return err(format!("guest {gi}: exceptional vertex {x} has no pre-image")),
                    Some(v) => {
                        if hc[v] != 0 {
                            return err(format!("guest {gi}: phi0({x}) = {v} not in V_0"));
                        }
                        if !used.insert(v) {
                            return err(format!("guest {gi}: phi0 not injective at {v}"));
                        }
                    }
                }
            }
            if self.phi0.iter().filter(|t| t[0] == gi).count() != parts[0].len() {
                return err(format!("guest {gi}: phi0 defined outside X_0"));
            }
        }
        Ok(())
    }

    pub fn host_pair(&self, i: usize, j: usize) -> Result<BipartitePair> {
        BipartitePair::from_graph(&self.host, &self.host_partition[i], &self.host_partition[j])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<ConditionRow>,
    pub pair_verdicts: Vec<((usize, usize), RegularityVerdict)>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, condition: &str) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }
}

pub const COND_SUPER_REGULAR: &str = "super-regular";
pub const COND_BOUNDED: &str = "bounded-degree";
pub const COND_FEW_LINKED: &str = "few-exceptional-neighbours";
pub const COND_LINK_ROOM: &str = "exceptional-neighbourhoods-large";
pub const COND_PREIMAGE: &str = "pre-images-spread";
pub const COND_CODEGREE: &str = "exceptional-codegree-small";

fn row(condition: &str, first: Option<serde_json::Value>) -> ConditionRow {
    ConditionRow { condition: condition.into(), passed: first.is_none(), counterexample: first }
}

/// Validates super-regularity of every reduced pair, `alpha⁻¹`-boundedness,
/// and the four linkedness conditions of the pre-embedding.
pub fn validate_extended_instance(
    inst: &BlowUpInstance,
    eps: f64,
    alpha: f64,
    d: f64,
    method: Method,
) -> Result<ValidationReport> {
    inst.check_structure()?;
    let r = inst.r();
    let mut verdicts = Vec::new();
    let mut first_sr = None;
    for (i, j) in inst.reduced.edges() {
        let m = match method {
            Method::Exhaustive => Method::auto(inst.host_partition[i].len() + inst.host_partition[j].len()),
            m => m,
        };
        let v = super_regularity_verdict(&inst.host_pair(i, j)?, eps, d, m)?;
        if !v.accepted && first_sr.is_none() {
            first_sr = Some(serde_json::json!({ "pair": [i, j], "witness": v.witness }));
        }
        verdicts.push(((i, j), v));
    }
    let bound = (1.0 / alpha).floor() as usize;
    let first_bounded = inst
        .guests
        .iter()
        .enumerate()
        .find(|(_, h)| h.max_degree() > bound)
        .map(|(g, h)| serde_json::json!({ "guest": g, "max_degree": h.max_degree(), "bound": bound }));

    let phi0 = inst.phi0_maps();
    let mut first_few = None;
    let mut first_room = None;
    let mut pair_counts: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    for (g, (h, parts)) in inst.guests.iter().zip(&inst.guest_partitions).enumerate() {
        let x0 = bitset_of(h.vertex_count(), parts[0].iter().copied());
        for i in 1..=r {
            let vi = bitset_of(inst.host.vertex_count(), inst.host_partition[i].iter().copied());
            let mut linked = 0usize;
            for &x in &parts[i] {
                let images: Vec<usize> = h
                    .neighbour_set(x)
                    .intersection(&x0)
                    .filter_map(|x0v| phi0[g][x0v])
                    .collect();
                if images.is_empty() {
                    continue;
                }
                linked += 1;
                let mut common = vi.clone();
                for &u in &images {
                    common.intersect_with(inst.host.neighbour_set(u));
                }
                let room = common.count_ones(..);
                if (room as f64) < alpha * parts[i].len() as f64 - 1e-9 && first_room.is_none() {
                    first_room = Some(serde_json::json!({ "guest": g, "cluster": i, "x": x, "room": room }));
                }
                let mut sorted = images.clone();
                sorted.sort_unstable();
                for a in 0..sorted.len() {
                    for b in a + 1..sorted.len() {
                        *pair_counts.entry((i, sorted[a], sorted[b])).or_default() += 1;
                    }
                }
            }
            if (linked as f64) > eps * parts[i].len() as f64 + 1e-9 && first_few.is_none() {
                first_few = Some(serde_json::json!({ "guest": g, "cluster": i, "count": linked }));
            }
        }
    }
    let mut preimages = vec![0usize; inst.host.vertex_count()];
    for &[_, _, v] in &inst.phi0 {
        preimages[v] += 1;
    }
    let cap = eps * inst.guests.len() as f64;
    let first_pre = inst.host_partition[0]
        .iter()
        .find(|&&v| preimages[v] as f64 > cap + 1e-9)
        .map(|&v| serde_json::json!({ "v": v, "count": preimages[v] }));
    let first_codeg = pair_counts
        .iter()
        .find(|(&(i, _, _), &c)| c as f64 > eps * (inst.host_partition[i].len() as f64).sqrt() + 1e-9)
        .map(|(&(i, a, b), &c)| serde_json::json!({ "cluster": i, "v0": a, "v0_prime": b, "count": c }));

    Ok(ValidationReport {
        rows: vec![
            row(COND_SUPER_REGULAR, first_sr),
            row(COND_BOUNDED, first_bounded),
            row(COND_FEW_LINKED, first_few),
            row(COND_LINK_ROOM, first_room),
            row(COND_PREIMAGE, first_pre),
            row(COND_CODEGREE, first_codeg),
        ],
        pair_verdicts: verdicts,
    })
}
