//! Packing instances: candidacy graphs, edge-set labellings, conflict-free
//! packings, the auxiliary hypergraph and the approximate packing step.
//!
//! Local conventions: `candidacy[g][i]` is a [`BipartitePair`] with identity
//! ids whose left index `a` stands for `slots[i].guest_parts[g][a]` and whose
//! right index `b` stands for `slots[i].host[b]`. Slot 0 is the cluster being
//! packed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bitset_of, BipartitePair, Graph};
use crate::hypermatch::{find_matching, Hypergraph, MatchParams, TupleWeight};
use crate::regularity::{super_regularity_verdict, Method};
use crate::rng;
use crate::testers::SetTester;

/// A label is either a host edge (stored sorted) or a reserved padding id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "kebab-case")]
pub enum Label {
    Edge([usize; 2]),
    Artificial(usize),
}

impl Label {
    pub fn edge(u: usize, v: usize) -> Label {
        Label::Edge([u.min(v), u.max(v)])
    }

    pub fn is_artificial(&self) -> bool {
        matches!(self, Label::Artificial(_))
    }
}

/// `ψ(xv) = { uv : u ∈ anchors(g, x) } ∪ extra(g, x, v)` for a candidacy edge
/// `xv` of guest `g`. Anchors are the host images of the already embedded
/// neighbours of `x`, so a label `uv` always sits on edges at `v`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "LabellingJson", from = "LabellingJson")]
pub struct EdgeSetLabelling {
    anchors: BTreeMap<(usize, usize), Vec<usize>>,
    extra: BTreeMap<(usize, usize, usize), Vec<Label>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct LabellingJson {
    anchors: Vec<(usize, usize, Vec<usize>)>,
    extra: Vec<(usize, usize, usize, Vec<Label>)>,
}

impl From<EdgeSetLabelling> for LabellingJson {
    fn from(l: EdgeSetLabelling) -> Self {
        LabellingJson {
            anchors: l.anchors.into_iter().map(|((g, x), us)| (g, x, us)).collect(),
            extra: l.extra.into_iter().map(|((g, x, v), ls)| (g, x, v, ls)).collect(),
        }
    }
}

impl From<LabellingJson> for EdgeSetLabelling {
    fn from(j: LabellingJson) -> Self {
        EdgeSetLabelling {
            anchors: j.anchors.into_iter().map(|(g, x, us)| ((g, x), us)).collect(),
            extra: j.extra.into_iter().map(|(g, x, v, ls)| ((g, x, v), ls)).collect(),
        }
    }
}

impl EdgeSetLabelling {
    pub fn new() -> EdgeSetLabelling {
        EdgeSetLabelling::default()
    }

    pub fn anchors(&self, g: usize, x: usize) -> &[usize] {
        self.anchors.get(&(g, x)).map_or(&[], |v| v.as_slice())
    }

    pub fn set_anchors(&mut self, g: usize, x: usize, us: Vec<usize>) {
        if us.is_empty() {
            self.anchors.remove(&(g, x));
        } else {
            self.anchors.insert((g, x), us);
        }
    }

    pub fn push_anchor(&mut self, g: usize, x: usize, u: usize) {
        let e = self.anchors.entry((g, x)).or_default();
        if !e.contains(&u) {
            e.push(u);
        }
    }

    pub fn insert_extra(&mut self, g: usize, x: usize, v: usize, label: Label) {
        let e = self.extra.entry((g, x, v)).or_default();
        if !e.contains(&label) {
            e.push(label);
        }
    }

    /// Every label on `xv`, including padding.
    pub fn labels(&self, g: usize, x: usize, v: usize) -> Vec<Label> {
        let mut out: Vec<Label> = self.anchors(g, x).iter().map(|&u| Label::edge(u, v)).collect();
        if let Some(ex) = self.extra.get(&(g, x, v)) {
            for l in ex {
                if !out.contains(l) {
                    out.push(*l);
                }
            }
        }
        out
    }

    /// Labels on `xv` with padding stripped.
    pub fn real_labels(&self, g: usize, x: usize, v: usize) -> Vec<Label> {
        let mut l = self.labels(g, x, v);
        l.retain(|l| !l.is_artificial());
        l
    }

    /// `‖ψ‖` over the given candidacy edges `[g, x, v]`.
    pub fn norm(&self, edges: &[[usize; 3]]) -> usize {
        edges.iter().map(|&[g, x, v]| self.labels(g, x, v).len()).max().unwrap_or(0)
    }
}

/// `Δ_ψ`: the largest number of the given candidacy edges carrying one real label.
pub fn psi_degree(l: &EdgeSetLabelling, edges: &[[usize; 3]]) -> usize {
    let mut count: HashMap<Label, usize> = HashMap::new();
    for &[g, x, v] in edges {
        for lab in l.real_labels(g, x, v) {
            *count.entry(lab).or_insert(0) += 1;
        }
    }
    count.into_values().max().unwrap_or(0)
}

/// `Δ^c_ψ`: the largest number of the given candidacy edges carrying two fixed real labels.
pub fn psi_codegree(l: &EdgeSetLabelling, edges: &[[usize; 3]]) -> usize {
    let mut count: HashMap<(Label, Label), usize> = HashMap::new();
    for &[g, x, v] in edges {
        let mut labs = l.real_labels(g, x, v);
        labs.sort_unstable();
        for a in 0..labs.len() {
            for b in a + 1..labs.len() {
                *count.entry((labs[a], labs[b])).or_insert(0) += 1;
            }
        }
    }
    count.into_values().max().unwrap_or(0)
}

/// Checks that every label's edges share their host vertex and that no label
/// appears on two edges of the same guest.
pub fn check_labelling(l: &EdgeSetLabelling, edges: &[[usize; 3]]) -> Result<()> {
    let mut centre: HashMap<Label, usize> = HashMap::new();
    let mut per_guest: HashSet<(Label, usize)> = HashSet::new();
    for &[g, x, v] in edges {
        for lab in l.labels(g, x, v) {
            if let Label::Edge([a, b]) = lab {
                if a != v && b != v {
                    return Err(Error::Labelling(format!("label {a}-{b} on edge ({g},{x},{v}) misses its host vertex")));
                }
            }
            match centre.insert(lab, v) {
                Some(c) if c != v => {
                    return Err(Error::Labelling(format!("label {lab:?} sits at host vertices {c} and {v}")));
                }
                _ => {}
            }
            if !per_guest.insert((lab, g)) {
                return Err(Error::Labelling(format!("label {lab:?} appears twice for guest {g}")));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotSide {
    Centre,
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub side: SlotSide,
    /// The cluster of the surrounding instance this slot stands for.
    pub cluster: usize,
    pub host: Vec<usize>,
    /// `[guest]` → guest vertices of this slot.
    pub guest_parts: Vec<Vec<usize>>,
    pub density: f64,
}

#[derive(Clone, Debug)]
pub struct PackingInstance {
    pub guests: Arc<Vec<Graph>>,
    pub host_a: Arc<Graph>,
    pub host_b: Arc<Graph>,
    pub slots: Vec<Slot>,
    /// Reduced graph on slot indices; only edges between `A` slots.
    pub reduced: Graph,
    /// `[guest][slot]`.
    pub candidacy: Vec<Vec<BipartitePair>>,
    pub labelling: EdgeSetLabelling,
    pub d_a: f64,
    pub d_b: f64,
    /// Artificial `ℋ₊` edges `(x_0, x)` per `[guest][slot]`.
    pub plus: Vec<Vec<Vec<(usize, usize)>>>,
}

fn positions(part: &[usize], len: usize) -> Vec<usize> {
    let mut p = vec![usize::MAX; len];
    for (i, &x) in part.iter().enumerate() {
        p[x] = i;
    }
    p
}

/// `partner[g][slot][a]`: the `ℋ₊`-neighbour in slot 0 (local index) of the
/// `a`-th guest vertex of the slot, flagged when artificial.
type Partners = Vec<Vec<Vec<Option<(usize, bool)>>>>;

impl PackingInstance {
    pub fn r(&self) -> usize {
        self.slots.len().saturating_sub(1)
    }

    pub fn host_for(&self, slot: usize) -> &Graph {
        match self.slots[slot].side {
            SlotSide::B => &self.host_b,
            _ => &self.host_a,
        }
    }

    pub fn d_side(&self, slot: usize) -> f64 {
        match self.slots[slot].side {
            SlotSide::B => self.d_b,
            _ => self.d_a,
        }
    }

    /// Candidacy edges of slot `i` as global `[g, x, v]` triples.
    pub fn slot_edges(&self, i: usize) -> Vec<[usize; 3]> {
        let s = &self.slots[i];
        let mut out = Vec::new();
        for (g, per) in self.candidacy.iter().enumerate() {
            for (a, b) in per[i].edges() {
                out.push([g, s.guest_parts[g][a], s.host[b]]);
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let err = |s: String| Err(Error::Structure(s));
        if self.slots.first().map(|s| s.side) != Some(SlotSide::Centre) {
            return err("slot 0 must be the centre".into());
        }
        if self.slots[1..].iter().any(|s| s.side == SlotSide::Centre) {
            return err("only slot 0 may be the centre".into());
        }
        if self.reduced.vertex_count() != self.slots.len() {
            return err("reduced graph must live on the slots".into());
        }
        let ng = self.guests.len();
        if self.candidacy.len() != ng || self.plus.len() != ng {
            return err("candidacy and enlargement need one entry per guest".into());
        }
        for (i, s) in self.slots.iter().enumerate() {
            if s.guest_parts.len() != ng {
                return err(format!("slot {i}: one guest part per guest required"));
            }
            for g in 0..ng {
                let p = &self.candidacy[g][i];
                if p.left_len() != s.guest_parts[g].len() || p.right_len() != s.host.len() {
                    return err(format!("slot {i}, guest {g}: candidacy graph has the wrong shape"));
                }
            }
        }
        for (g, h) in self.guests.iter().enumerate() {
            let pos0 = positions(&self.slots[0].guest_parts[g], h.vertex_count());
            for (i, s) in self.slots.iter().enumerate().skip(1) {
                for &x in &s.guest_parts[g] {
                    if h.neighbours(x).filter(|&y| pos0[y] != usize::MAX).count() > 1 {
                        return err(format!("guest {g}: vertex {x} of slot {i} has two neighbours in slot 0"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Adds a maximal artificial matching between slot 0 and every other
    /// slot, per guest; copies of one cluster get independent matchings.
    pub fn enlarge(&mut self, seed: u64) {
        let plus: Vec<Vec<Vec<(usize, usize)>>> = (0..self.guests.len())
            .into_par_iter()
            .map(|g| {
                (0..self.slots.len())
                    .map(|i| {
                        if i == 0 {
                            return Vec::new();
                        }
                        let mut r = rng::child(seed, &[g as u64, i as u64]);
                        enlarge(&self.guests[g], &self.slots[0].guest_parts[g], &self.slots[i].guest_parts[g], &mut r)
                    })
                    .collect()
            })
            .collect();
        self.plus = plus;
    }

    fn partners(&self) -> Partners {
        (0..self.guests.len())
            .into_par_iter()
            .map(|g| {
                let h = &self.guests[g];
                let pos0 = positions(&self.slots[0].guest_parts[g], h.vertex_count());
                (0..self.slots.len())
                    .map(|i| {
                        let part = &self.slots[i].guest_parts[g];
                        if i == 0 {
                            return vec![None; part.len()];
                        }
                        let posi = positions(part, h.vertex_count());
                        let mut out: Vec<Option<(usize, bool)>> = part
                            .iter()
                            .map(|&x| h.neighbours(x).find(|&y| pos0[y] != usize::MAX).map(|y| (pos0[y], false)))
                            .collect();
                        for &(x0, x) in &self.plus[g][i] {
                            if posi[x] != usize::MAX && out[posi[x]].is_none() {
                                out[posi[x]] = Some((pos0[x0], true));
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect()
    }

    /// Edge-list form with the reduced graph split into `R_A` and `R_B`.
    pub fn to_json(&self) -> serde_json::Value {
        let r_a: Vec<[usize; 2]> = (1..self.slots.len())
            .filter(|&i| self.slots[i].side == SlotSide::A)
            .map(|i| [0, i])
            .chain(self.reduced.edges().into_iter().map(|(u, v)| [u, v]))
            .collect();
        let r_b: Vec<[usize; 2]> =
            (1..self.slots.len()).filter(|&i| self.slots[i].side == SlotSide::B).map(|i| [0, i]).collect();
        let cand: Vec<Vec<Vec<[usize; 2]>>> = self
            .candidacy
            .iter()
            .enumerate()
            .map(|(g, per)| {
                per.iter()
                    .enumerate()
                    .map(|(i, p)| {
                        p.edges()
                            .into_iter()
                            .map(|(a, b)| [self.slots[i].guest_parts[g][a], self.slots[i].host[b]])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({
            "slots": self.slots,
            "R_A": r_a,
            "R_B": r_b,
            "candidacy": cand,
            "psi": self.labelling,
            "d_A": self.d_a,
            "d_B": self.d_b,
            "plus": self.plus,
        })
    }
}

/// Artificial edges completing `H[X_0, X_i]` to a maximal matching. Only
/// vertices with no `H`-neighbour on the other side are paired, at random.
pub fn enlarge(h: &Graph, x0: &[usize], xi: &[usize], rng: &mut rng::Rng) -> Vec<(usize, usize)> {
    let s0 = bitset_of(h.vertex_count(), x0.iter().copied());
    let si = bitset_of(h.vertex_count(), xi.iter().copied());
    let mut free0: Vec<usize> = x0.iter().copied().filter(|&x| h.degree_into(x, &si) == 0).collect();
    let mut freei: Vec<usize> = xi.iter().copied().filter(|&x| h.degree_into(x, &s0) == 0).collect();
    free0.shuffle(rng);
    freei.shuffle(rng);
    free0.into_iter().zip(freei).collect()
}

/// Shared core of [`update_candidacy`]: `image(a)` is the host image of the
/// σ-matched neighbour of the `a`-th left vertex, if any.
fn update_with(a: &BipartitePair, vs: &[usize], host: &Graph, image: impl Fn(usize) -> Option<usize>) -> BipartitePair {
    let mut out = a.clone();
    for i in 0..a.left_len() {
        if let Some(u) = image(i) {
            for j in a.left_neighbours(i).ones() {
                if !host.has_edge(u, vs[j]) {
                    out.remove_edge(i, j);
                }
            }
        }
    }
    out
}

/// Keeps `xv` unless the σ-matched guest neighbour `x_0` of `x` has
/// `σ(x_0) v ∉ E(host)`. `xs`/`vs` name the left/right local positions.
pub fn update_candidacy(
    a: &BipartitePair,
    xs: &[usize],
    vs: &[usize],
    sigma: &HashMap<usize, usize>,
    host: &Graph,
    guest: &Graph,
) -> Result<BipartitePair> {
    let mut images = Vec::with_capacity(xs.len());
    for &x in xs {
        let matched: Vec<usize> = guest.neighbours(x).filter(|y| sigma.contains_key(y)).collect();
        if matched.len() > 1 {
            return Err(Error::Structure(format!("vertex {x} has matched neighbours {matched:?}")));
        }
        images.push(matched.first().map(|y| sigma[y]));
    }
    Ok(update_with(a, vs, host, |i| images[i]))
}

/// Per-vertex deletion counts of [`niceify`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeletionCensus {
    pub candidacy_deleted: usize,
    pub host_deleted: usize,
    pub max_candidacy_per_vertex: usize,
    pub max_host_per_vertex: usize,
    pub candidacy_budget: f64,
    pub host_budget: f64,
    /// Slot-0 candidacy graphs still super-regular at the relaxed parameter.
    pub reverified: bool,
    pub relaxed_epsilon: f64,
}

/// Deletes slot-0 candidacy edges whose neighbourhood intersections leave the
/// `3ε` window and host edges between `A` slots whose common neighbourhood in
/// slot 0 leaves it. Requires an enlarged instance.
pub fn niceify(inst: &PackingInstance, eps: f64) -> Result<(PackingInstance, DeletionCensus)> {
    inst.check()?;
    let partners = inst.partners();
    let s0 = &inst.slots[0];
    let n0 = s0.host.len();
    let nv = inst.host_a.vertex_count();
    // local_nbr[i][j0]: neighbours of the j0-th slot-0 host vertex inside slot i.
    let local_nbr: Vec<Vec<FixedBitSet>> = (0..inst.slots.len())
        .map(|i| {
            let hi = &inst.slots[i].host;
            let host = inst.host_for(i);
            s0.host.iter().map(|&v0| bitset_of(hi.len(), (0..hi.len()).filter(|&b| host.has_edge(v0, hi[b])))).collect()
        })
        .collect();
    let win = 3.0 * eps;
    let mut out = inst.clone();
    let mut x_del: Vec<Vec<usize>> = inst.slots[0].guest_parts.iter().map(|p| vec![0; p.len()]).collect();
    let mut v_del = vec![0usize; n0];
    let mut cand_deleted = 0;
    for g in 0..inst.guests.len() {
        let a0 = &inst.candidacy[g][0];
        // inverse partner table for slot i: slot-0 local → slot-i local.
        let inv: Vec<Vec<Option<usize>>> = (0..inst.slots.len())
            .map(|i| {
                let mut t = vec![None; a0.left_len()];
                for (li, p) in partners[g].get(i).map_or(&[][..], |v| v.as_slice()).iter().enumerate() {
                    if let Some((l0, _)) = p {
                        t[*l0] = Some(li);
                    }
                }
                t
            })
            .collect();
        for (l0, j0) in a0.edges() {
            let bad = (1..inst.slots.len()).any(|i| {
                let Some(li) = inv[i][l0] else { return false };
                let ai = &inst.candidacy[g][i];
                let c = ai.left_neighbours(li).intersection_count(&local_nbr[i][j0]) as f64;
                let target = inst.slots[i].density * inst.d_side(i) * inst.slots[i].host.len() as f64;
                (c - target).abs() > win * inst.slots[i].host.len() as f64 + 1e-9
            });
            if bad {
                out.candidacy[g][0].remove_edge(l0, j0);
                x_del[g][l0] += 1;
                v_del[j0] += 1;
                cand_deleted += 1;
            }
        }
    }
    let v0mask = bitset_of(nv, s0.host.iter().copied());
    let mut host_del = vec![0usize; nv];
    let mut host_deleted = 0;
    let mut new_a = (*inst.host_a).clone();
    for (i, j) in inst.reduced.edges() {
        if inst.slots[i].side != SlotSide::A || inst.slots[j].side != SlotSide::A {
            continue;
        }
        let target = inst.d_a * inst.d_a * n0 as f64;
        for &vi in &inst.slots[i].host {
            for &vj in &inst.slots[j].host {
                if !inst.host_a.has_edge(vi, vj) {
                    continue;
                }
                let mut common = inst.host_a.neighbour_set(vi).clone();
                common.intersect_with(inst.host_a.neighbour_set(vj));
                let c = common.intersection_count(&v0mask) as f64;
                if (c - target).abs() > win * n0 as f64 + 1e-9 {
                    new_a.remove_edge(vi, vj);
                    host_del[vi] += 1;
                    host_del[vj] += 1;
                    host_deleted += 1;
                }
            }
        }
    }
    out.host_a = Arc::new(new_a);
    let r = inst.r().max(1) as f64;
    let max_c = x_del.iter().flatten().chain(v_del.iter()).copied().max().unwrap_or(0);
    let max_h = host_del.iter().copied().max().unwrap_or(0);
    let relaxed = (2.0 * win).min(0.95);
    let reverified = out.candidacy.iter().all(|per| {
        let p = &per[0];
        p.left_len() == 0
            || p.right_len() == 0
            || super_regularity_verdict(p, relaxed, inst.slots[0].density, Method::auto(p.left_len() + p.right_len()))
                .map(|v| v.accepted)
                .unwrap_or(false)
    });
    let census = DeletionCensus {
        candidacy_deleted: cand_deleted,
        host_deleted,
        max_candidacy_per_vertex: max_c,
        max_host_per_vertex: max_h,
        candidacy_budget: 2.0 * r * eps * n0 as f64,
        host_budget: 2.0 * r * eps * n0 as f64,
        reverified,
        relaxed_epsilon: relaxed,
    };
    if max_c as f64 > census.candidacy_budget + 1e-9 || max_h as f64 > census.host_budget + 1e-9 {
        return Err(Error::Step(format!(
            "instance degradation: per-vertex deletions {max_c} (candidacy) / {max_h} (host) exceed budget {:.2}",
            census.candidacy_budget
        )));
    }
    Ok((out, census))
}

/// The auxiliary hypergraph: one hyperedge `{(g,x), (g,v)} ∪ ψ(xv)` per
/// slot-0 candidacy edge, padded with private labels to a common size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxHypergraph {
    pub hypergraph: Hypergraph,
    /// Hyperedge → `[g, x, v]`.
    pub index: Vec<[usize; 3]>,
    /// Largest label set before padding.
    pub s: usize,
    pub guest_nodes: usize,
    pub host_nodes: usize,
}

impl AuxHypergraph {
    /// The packing a set of hyperedges stands for.
    pub fn to_packing(&self, edges: &[usize], guests: usize) -> ConflictFreePacking {
        let mut sigma = vec![BTreeMap::new(); guests];
        for &e in edges {
            let [g, x, v] = self.index[e];
            sigma[g].insert(x, v);
        }
        ConflictFreePacking { sigma }
    }
}

pub fn build_aux_hypergraph(inst: &PackingInstance) -> Result<AuxHypergraph> {
    let edges0 = inst.slot_edges(0);
    check_labelling(&inst.labelling, &edges0)?;
    let s0 = &inst.slots[0];
    let n0 = s0.host.len();
    let ng = inst.guests.len();
    let mut goff = Vec::with_capacity(ng + 1);
    goff.push(0);
    for g in 0..ng {
        goff.push(goff[g] + s0.guest_parts[g].len());
    }
    let guest_nodes = goff[ng];
    let host_nodes = ng * n0;
    let s = inst.labelling.norm(&edges0);
    let mut label_id: HashMap<Label, usize> = HashMap::new();
    let mut next = guest_nodes + host_nodes;
    let mut flat: Vec<Vec<usize>> = Vec::with_capacity(edges0.len());
    let mut index = Vec::with_capacity(edges0.len());
    for g in 0..ng {
        for (a, b) in inst.candidacy[g][0].edges() {
            let (x, v) = (s0.guest_parts[g][a], s0.host[b]);
            let mut e = vec![goff[g] + a, guest_nodes + g * n0 + b];
            for lab in inst.labelling.labels(g, x, v) {
                let id = *label_id.entry(lab).or_insert_with(|| {
                    next += 1;
                    next - 1
                });
                e.push(id);
            }
            while e.len() < s + 2 {
                e.push(next);
                next += 1;
            }
            flat.push(e);
            index.push([g, x, v]);
        }
    }
    let hypergraph = Hypergraph::new(s + 2, next, flat)?;
    Ok(AuxHypergraph { hypergraph, index, s, guest_nodes, host_nodes })
}

/// `σ` per guest: guest vertex of slot 0 → host vertex of slot 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConflictFreePacking {
    pub sigma: Vec<BTreeMap<usize, usize>>,
}

impl ConflictFreePacking {
    /// `M(σ)` as `[g, x, v]` triples.
    pub fn edges(&self) -> Vec<[usize; 3]> {
        self.sigma
            .iter()
            .enumerate()
            .flat_map(|(g, m)| m.iter().map(move |(&x, &v)| [g, x, v]))
            .collect()
    }

    /// Per-guest injectivity and pairwise disjoint label sets.
    pub fn check(&self, l: &EdgeSetLabelling) -> Result<()> {
        let mut seen: HashSet<Label> = HashSet::new();
        for (g, m) in self.sigma.iter().enumerate() {
            let mut used = HashSet::new();
            for (&x, &v) in m {
                if !used.insert(v) {
                    return Err(Error::Structure(format!("guest {g}: two vertices mapped to {v}")));
                }
                for lab in l.labels(g, x, v) {
                    if !seen.insert(lab) {
                        return Err(Error::Structure(format!("label {lab:?} used twice (guest {g}, vertex {x})")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A weight on slot candidacy edges `[g, x, v]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeTester {
    pub slot: usize,
    pub weights: Vec<([usize; 3], f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    /// Input regularity parameter `ε`.
    pub eps: f64,
    /// Conclusions (I)/(II) and coverage are checked at `eps_slack · ε`.
    pub eps_slack: f64,
    /// Absolute slack, in units of the cluster size, for (III)–(VII).
    pub tol: f64,
    /// Smallest admissible `e_H(X_i, X_j)` is `degenerate_eps² n`.
    pub degenerate_eps: f64,
    pub matcher: MatchParams,
    pub repair: bool,
    pub repair_depth: usize,
    pub retries: usize,
    /// Turn a coverage shortfall into an error instead of a failed row.
    pub strict: bool,
    pub weight_cap: usize,
    /// Pairs sampled per guest and slot pair for (II).
    pub triple_samples: usize,
}

impl StepParams {
    pub fn new(eps: f64, seed: u64) -> StepParams {
        StepParams {
            eps,
            eps_slack: 3.0,
            tol: 0.1,
            degenerate_eps: eps,
            matcher: MatchParams::new(seed),
            repair: true,
            repair_depth: 3,
            retries: 3,
            strict: false,
            weight_cap: 128,
            triple_samples: 4,
        }
    }

    pub fn eps_out(&self) -> f64 {
        (self.eps_slack * self.eps).min(0.95)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConclusionRow {
    pub conclusion: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

fn crow(name: &str, measured: f64, target: f64, tolerance: f64, passed: bool) -> ConclusionRow {
    ConclusionRow { conclusion: name.into(), measured, target, tolerance, passed, detail: None }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightAudit {
    pub name: String,
    pub arity: usize,
    pub total: f64,
    pub on_matching: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub rows: Vec<ConclusionRow>,
    pub eps_in: f64,
    pub eps_out: f64,
    /// `|dom σ ∩ X_0^H| / |X_0^H|` per guest.
    pub coverage: Vec<f64>,
    pub hyperedges: usize,
    pub uniformity: usize,
    pub max_degree: usize,
    pub max_codegree: usize,
    pub matched: usize,
    pub repaired: usize,
    pub attempts: usize,
    pub weights: Vec<WeightAudit>,
    pub sparsified: usize,
}

impl StepReport {
    pub fn row(&self, name: &str) -> Option<&ConclusionRow> {
        self.rows.iter().find(|r| r.conclusion == name)
    }

    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub packing: ConflictFreePacking,
    /// `[guest][slot]`; slot 0 is carried over unchanged.
    pub candidacy: Vec<Vec<BipartitePair>>,
    pub labelling: EdgeSetLabelling,
    pub report: StepReport,
}

const FREE: usize = usize::MAX;

/// Augmenting repair: an uncovered guest node takes a candidate edge that is
/// free or blocked by a single matched edge whose guest node can move on.
fn repair(h: &Hypergraph, matching: &mut Vec<usize>, targets: std::ops::Range<usize>, depth: usize) -> usize {
    let (off, inc) = h.incidence();
    let mut owner = vec![FREE; h.vertex_count()];
    for &e in matching.iter() {
        for &v in h.edge(e) {
            owner[v] = e;
        }
    }
    let mut in_m = vec![false; h.edge_count()];
    for &e in matching.iter() {
        in_m[e] = true;
    }
    struct Ctx<'a> {
        h: &'a Hypergraph,
        off: &'a [usize],
        inc: &'a [usize],
        owner: &'a mut Vec<usize>,
        in_m: &'a mut Vec<bool>,
        budget: usize,
    }
    fn take(c: &mut Ctx, e: usize) {
        for &v in c.h.edge(e) {
            c.owner[v] = e;
        }
        c.in_m[e] = true;
    }
    fn drop(c: &mut Ctx, e: usize) {
        for &v in c.h.edge(e) {
            c.owner[v] = FREE;
        }
        c.in_m[e] = false;
    }
    fn augment(c: &mut Ctx, node: usize, depth: usize, visited: &mut HashSet<usize>) -> bool {
        for k in c.off[node]..c.off[node + 1] {
            let e = c.inc[k];
            if c.in_m[e] || !visited.insert(e) {
                continue;
            }
            if c.budget == 0 {
                return false;
            }
            c.budget -= 1;
            let mut blockers: Vec<usize> = Vec::new();
            for &v in c.h.edge(e) {
                let o = c.owner[v];
                if o != FREE && !blockers.contains(&o) {
                    blockers.push(o);
                }
            }
            if blockers.is_empty() {
                take(c, e);
                return true;
            }
            if blockers.len() == 1 && depth > 0 {
                let f = blockers[0];
                let moved = c.h.edge(f)[0];
                drop(c, f);
                take(c, e);
                if augment(c, moved, depth - 1, visited) {
                    return true;
                }
                drop(c, e);
                take(c, f);
            }
        }
        false
    }
    let mut ctx = Ctx { h, off: &off, inc: &inc, owner: &mut owner, in_m: &mut in_m, budget: 0 };
    let mut gained = 0;
    for t in targets {
        if ctx.owner[t] != FREE {
            continue;
        }
        ctx.budget = 4000;
        let mut visited = HashSet::new();
        if augment(&mut ctx, t, depth, &mut visited) {
            gained += 1;
        }
    }
    *matching = (0..h.edge_count()).filter(|&e| in_m[e]).collect();
    gained
}

/// Edge ids of the aux hypergraph keyed by `[g, x, v]`.
fn edge_lookup(aux: &AuxHypergraph) -> HashMap<[usize; 3], usize> {
    aux.index.iter().enumerate().map(|(e, &t)| (t, e)).collect()
}

fn register_weights(
    inst: &PackingInstance,
    aux: &AuxHypergraph,
    partners: &Partners,
    set_testers: &[SetTester],
    edge_testers: &[EdgeTester],
    params: &StepParams,
) -> Vec<(String, TupleWeight)> {
    let lookup = &edge_lookup(aux);
    let h = &aux.hypergraph;
    let s0 = &inst.slots[0];
    let mut r = rng::child(params.matcher.seed, &[0xB0B]);
    let mut out: Vec<(String, TupleWeight)> = Vec::new();
    let cap = params.weight_cap.max(1);
    for g in 0..inst.guests.len() {
        let vals: Vec<(usize, f64)> =
            aux.index.iter().enumerate().filter(|(_, t)| t[0] == g).map(|(e, _)| (e, 1.0)).collect();
        if !vals.is_empty() {
            out.push((format!("cover:{g}"), TupleWeight::edges(vals)));
        }
    }
    for (k, t) in set_testers.iter().enumerate().filter(|(_, t)| t.cluster == s0.cluster) {
        let w = &t.w;
        if t.arity() == 1 {
            let (g, ys) = &t.ys[0];
            let vals: Vec<(usize, f64)> = ys
                .iter()
                .flat_map(|&y| w.iter().filter_map(move |&v| lookup.get(&[*g, y, v]).map(|&e| (e, 1.0))))
                .collect();
            out.push((format!("set:{k}"), TupleWeight::edges(vals)));
        } else {
            let centres: Vec<Vec<Vec<usize>>> = t
                .w
                .iter()
                .map(|&v| {
                    t.ys.iter()
                        .map(|(g, ys)| ys.iter().filter_map(|&y| lookup.get(&[*g, y, v]).copied()).collect())
                        .collect()
                })
                .collect();
            out.push((format!("set:{k}"), TupleWeight::StarProduct { centres }));
        }
    }
    for (k, t) in edge_testers.iter().enumerate().filter(|(_, t)| t.slot == 0) {
        let vals: Vec<(usize, f64)> = t.weights.iter().filter_map(|(e, w)| lookup.get(e).map(|&i| (i, *w))).collect();
        if !vals.is_empty() {
            out.push((format!("edge:{k}"), TupleWeight::edges(vals)));
        }
    }
    // Label boundedness: a sample of labels carried by at least two edges.
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let label_start = aux.guest_nodes + aux.host_nodes;
    for (e, edge) in h.edges().enumerate() {
        for &v in &edge[2..] {
            if v >= label_start {
                by_label.entry(v).or_default().push(e);
            }
        }
    }
    let mut busy: Vec<&Vec<usize>> = by_label.values().filter(|es| es.len() > 1).collect();
    busy.shuffle(&mut r);
    for es in busy.into_iter().take(16) {
        out.push((format!("label:{}", es[0]), TupleWeight::edges(es.iter().map(|&e| (e, 1.0)).collect())));
    }
    // ω_{S,T}: random halves of the guest part and the host part.
    for g in 0..inst.guests.len().min(8) {
        let mut xs = s0.guest_parts[g].clone();
        let mut vs = s0.host.clone();
        xs.shuffle(&mut r);
        vs.shuffle(&mut r);
        xs.truncate(xs.len() / 2);
        vs.truncate(vs.len() / 2);
        let vals: Vec<(usize, f64)> = xs
            .iter()
            .flat_map(|&x| vs.iter().filter_map(move |&v| lookup.get(&[g, x, v]).map(|&e| (e, 1.0))))
            .collect();
        if !vals.is_empty() {
            out.push((format!("st:{g}"), TupleWeight::edges(vals)));
        }
    }
    // ω₂: pairs of slot-0 choices keeping a guest edge between two A slots
    // inside the neighbourhoods of a host edge.
    let mut triples = 0;
    'outer: for (i, j) in inst.reduced.edges() {
        for g in 0..inst.guests.len() {
            if triples >= 8 {
                break 'outer;
            }
            let (si, sj) = (&inst.slots[i], &inst.slots[j]);
            if si.host.is_empty() || sj.host.is_empty() {
                continue;
            }
            let vi = si.host[r.gen_range(0..si.host.len())];
            let vj = sj.host[r.gen_range(0..sj.host.len())];
            if !inst.host_a.has_edge(vi, vj) {
                continue;
            }
            let h = &inst.guests[g];
            let posj = positions(&sj.guest_parts[g], h.vertex_count());
            let mut centres = Vec::new();
            for (li, &xi) in si.guest_parts[g].iter().enumerate() {
                for xj in h.neighbours(xi).filter(|&y| posj[y] != usize::MAX) {
                    let lj = posj[xj];
                    let (Some((pi, _)), Some((pj, _))) = (partners[g][i][li], partners[g][j][lj]) else { continue };
                    let (p_i, p_j) = (s0.guest_parts[g][pi], s0.guest_parts[g][pj]);
                    let li_list: Vec<usize> = s0
                        .host
                        .iter()
                        .filter(|&&u| inst.host_a.has_edge(u, vi))
                        .filter_map(|&u| lookup.get(&[g, p_i, u]).copied())
                        .collect();
                    let lj_list: Vec<usize> = s0
                        .host
                        .iter()
                        .filter(|&&u| inst.host_a.has_edge(u, vj))
                        .filter_map(|&u| lookup.get(&[g, p_j, u]).copied())
                        .collect();
                    centres.push(vec![li_list, lj_list]);
                }
            }
            if !centres.is_empty() {
                out.push((format!("triple:{g}:{i}:{j}"), TupleWeight::StarProduct { centres }));
                triples += 1;
            }
        }
    }
    out.truncate(cap);
    out
}

/// One application of the approximate packing lemma: matches slot 0 into
/// its host cluster, updates the other slots' candidacy graphs and the
/// labelling, and checks the seven conclusions plus coverage.
pub fn approximate_pack_step(
    inst: &PackingInstance,
    set_testers: &[SetTester],
    edge_testers: &[EdgeTester],
    params: &StepParams,
) -> Result<StepOutcome> {
    inst.check()?;
    let ng = inst.guests.len();
    let s0 = &inst.slots[0];
    let n = s0.host.len().max(1) as f64;
    let eps_out = params.eps_out();
    // Degenerate pairs between A slots are rejected.
    for (i, j) in inst.reduced.edges() {
        for (g, h) in inst.guests.iter().enumerate() {
            let sj = bitset_of(h.vertex_count(), inst.slots[j].guest_parts[g].iter().copied());
            let e: usize = inst.slots[i].guest_parts[g].iter().map(|&x| h.degree_into(x, &sj)).sum();
            if (e as f64) < params.degenerate_eps.powi(2) * n - 1e-9 {
                return Err(Error::Step(format!(
                    "guest {g}: slots {i},{j} carry {e} guest edges, below {:.2}",
                    params.degenerate_eps.powi(2) * n
                )));
            }
        }
    }
    let partners = inst.partners();
    let aux = build_aux_hypergraph(inst)?;
    let weights = register_weights(inst, &aux, &partners, set_testers, edge_testers, params);
    let only: Vec<TupleWeight> = weights.iter().map(|(_, w)| w.clone()).collect();
    let goff_end = aux.guest_nodes;

    let coverage_of = |p: &ConflictFreePacking| -> Vec<f64> {
        (0..ng)
            .map(|g| {
                let len = s0.guest_parts[g].len();
                if len == 0 {
                    1.0
                } else {
                    p.sigma[g].len() as f64 / len as f64
                }
            })
            .collect()
    };
    let floor = 1.0 - eps_out;
    let mut best: Option<(f64, Vec<usize>, usize, Option<crate::hypermatch::MatchingReport>)> = None;
    let mut attempts = 0;
    if aux.hypergraph.edge_count() > 0 {
        for attempt in 0..params.retries.max(1) {
            attempts += 1;
            let mut mp = params.matcher.clone();
            mp.seed = rng::derive(params.matcher.seed, &[attempt as u64]);
            let rep = find_matching(&aux.hypergraph, &only, &mp)?;
            let mut m = rep.matching.clone();
            let repaired = if params.repair { repair(&aux.hypergraph, &mut m, 0..goff_end, params.repair_depth) } else { 0 };
            let cov = coverage_of(&aux.to_packing(&m, ng));
            let worst = cov.iter().copied().fold(1.0, f64::min);
            let better = best.as_ref().map_or(true, |b| worst > b.0 + 1e-12);
            if better {
                best = Some((worst, m, repaired, Some(rep)));
            }
            if worst >= floor - 1e-12 {
                break;
            }
        }
    }
    let (_, matching, repaired, mrep) = best.unwrap_or((1.0, Vec::new(), 0, None));
    let packing = aux.to_packing(&matching, ng);
    packing.check(&inst.labelling).map_err(|e| Error::Structure(format!("conflict after matching: {e}")))?;
    let coverage = coverage_of(&packing);
    if params.strict {
        if let Some((g, c)) = coverage.iter().enumerate().find(|(_, &c)| c < floor - 1e-12) {
            return Err(Error::Step(format!("guest {g}: coverage {c:.3} below {floor:.3}")));
        }
    }

    // Updated candidacy graphs and labelling.
    let images: Vec<Vec<Option<usize>>> = (0..ng)
        .map(|g| s0.guest_parts[g].iter().map(|x| packing.sigma[g].get(x).copied()).collect())
        .collect();
    let jobs: Vec<(usize, usize)> = (0..ng).flat_map(|g| (1..inst.slots.len()).map(move |i| (g, i))).collect();
    let seed = params.matcher.seed;
    let updated: Vec<(BipartitePair, usize)> = jobs
        .par_iter()
        .map(|&(g, i)| {
            let a = &inst.candidacy[g][i];
            let host = inst.host_for(i);
            let vs = &inst.slots[i].host;
            let p = &partners[g][i];
            let mut out = update_with(a, vs, host, |li| p[li].and_then(|(l0, _)| images[g][l0]));
            let dz = inst.d_side(i);
            let mut r = rng::child(seed, &[0x5A, g as u64, i as u64]);
            let mut dropped = 0;
            for li in 0..a.left_len() {
                let good = p[li].map_or(false, |(l0, _)| images[g][l0].is_some());
                if good {
                    continue;
                }
                let row: Vec<usize> = out.left_neighbours(li).ones().collect();
                for j in row {
                    if r.gen::<f64>() >= dz {
                        out.remove_edge(li, j);
                        dropped += 1;
                    }
                }
            }
            (out, dropped)
        })
        .collect();
    let mut candidacy: Vec<Vec<BipartitePair>> = (0..ng).map(|g| vec![inst.candidacy[g][0].clone()]).collect();
    let mut sparsified = 0;
    for (&(g, _), (p, d)) in jobs.iter().zip(updated) {
        candidacy[g].push(p);
        sparsified += d;
    }
    let mut labelling = inst.labelling.clone();
    for (i, s) in inst.slots.iter().enumerate().skip(1) {
        if s.side != SlotSide::A {
            continue;
        }
        for g in 0..ng {
            for (li, &x) in s.guest_parts[g].iter().enumerate() {
                if let Some((l0, false)) = partners[g][i][li] {
                    if let Some(v) = images[g][l0] {
                        labelling.push_anchor(g, x, v);
                    }
                }
            }
        }
    }

    let mut next = inst.clone();
    next.candidacy = candidacy.clone();
    next.labelling = labelling.clone();
    let mut rows = Vec::new();

    // (I) super-regularity of the updated candidacy graphs.
    let verdict_jobs: Vec<(usize, usize)> = jobs.clone();
    let verdicts: Vec<(usize, usize, bool)> = verdict_jobs
        .par_iter()
        .map(|&(g, i)| {
            let p = &candidacy[g][i];
            if p.left_len() == 0 || p.right_len() == 0 {
                return (g, i, true);
            }
            let d = (inst.slots[i].density * inst.d_side(i)).clamp(0.0, 1.0);
            let ok = super_regularity_verdict(p, eps_out, d, Method::auto(p.left_len() + p.right_len()))
                .map(|v| v.accepted)
                .unwrap_or(false);
            (g, i, ok)
        })
        .collect();
    let failed: Vec<[usize; 2]> = verdicts.iter().filter(|v| !v.2).map(|v| [v.0, v.1]).collect();
    let mut row = crow("I", failed.len() as f64, 0.0, 0.0, failed.is_empty());
    if !failed.is_empty() {
        row.detail = Some(serde_json::json!({ "failing": failed.iter().take(16).collect::<Vec<_>>(), "pairs": verdicts.len() }));
    }
    rows.push(row);

    // (II) triple intersections on sampled host edges.
    let mut worst2 = 0.0f64;
    let mut r2 = rng::child(seed, &[0x77]);
    for (i, j) in inst.reduced.edges() {
        let (si, sj) = (&inst.slots[i], &inst.slots[j]);
        let target = si.density * sj.density * inst.d_a * inst.d_a;
        for g in 0..ng {
            let h = &inst.guests[g];
            let posj = positions(&sj.guest_parts[g], h.vertex_count());
            let pairs: Vec<(usize, usize)> = si.guest_parts[g]
                .iter()
                .enumerate()
                .flat_map(|(li, &x)| h.neighbours(x).filter(|&y| posj[y] != usize::MAX).map(move |y| (li, y)))
                .map(|(li, y)| (li, posj[y]))
                .collect();
            if pairs.is_empty() {
                continue;
            }
            for _ in 0..params.triple_samples {
                let (bi, bj) = (r2.gen_range(0..si.host.len()), r2.gen_range(0..sj.host.len()));
                if !inst.host_a.has_edge(si.host[bi], sj.host[bj]) {
                    continue;
                }
                let c = pairs
                    .iter()
                    .filter(|&&(li, lj)| candidacy[g][i].has_edge(li, bi) && candidacy[g][j].has_edge(lj, bj))
                    .count() as f64;
                worst2 = worst2.max((c / pairs.len() as f64 - target).abs());
            }
        }
    }
    rows.push(crow("II", worst2, 0.0, eps_out, worst2 <= eps_out + 1e-9));

    // (III) edge masses of the updated graphs.
    let mut worst3 = 0.0f64;
    let mut tol3 = 0.0f64;
    for &(g, i) in &jobs {
        let dz = inst.d_side(i);
        let old = inst.candidacy[g][i].edge_count() as f64;
        let new = candidacy[g][i].edge_count() as f64;
        let ni = inst.slots[i].host.len().max(1) as f64;
        // Measured in units of the cluster size.
        let dev = (new - dz * old).abs() / ni;
        let tol = eps_out.powi(2) * dz * old / ni + params.tol * ni;
        if dev - tol > worst3 - tol3 || (worst3 == 0.0 && tol3 == 0.0) {
            worst3 = dev;
            tol3 = tol;
        }
    }
    for t in edge_testers.iter().filter(|t| t.slot > 0 && t.slot < inst.slots.len()) {
        let i = t.slot;
        let s = &inst.slots[i];
        let dz = inst.d_side(i);
        let has = |c: &Vec<Vec<BipartitePair>>, e: &[usize; 3]| -> bool {
            let [g, x, v] = *e;
            let a = s.guest_parts[g].iter().position(|&y| y == x);
            let b = s.host.iter().position(|&u| u == v);
            matches!((a, b), (Some(a), Some(b)) if c[g][i].has_edge(a, b))
        };
        let old: f64 = t.weights.iter().filter(|(e, _)| has(&inst.candidacy, e)).map(|(_, w)| w).sum();
        let new: f64 = t.weights.iter().filter(|(e, _)| has(&candidacy, e)).map(|(_, w)| w).sum();
        let ni = s.host.len().max(1) as f64;
        let dev = (new - dz * old).abs() / ni;
        let tol = eps_out.powi(2) * dz * old / ni + params.tol * ni;
        if dev - tol > worst3 - tol3 {
            worst3 = dev;
            tol3 = tol;
        }
    }
    rows.push(crow("III", worst3, 0.0, tol3, worst3 <= tol3 + 1e-9));

    // (IV) label degree and (V) label codegree on A slots.
    let mut worst4: Option<(f64, f64)> = None;
    let mut worst5 = 0usize;
    for (i, s) in inst.slots.iter().enumerate().skip(1) {
        if s.side != SlotSide::A {
            continue;
        }
        let edges = next.slot_edges(i);
        let deg = psi_degree(&labelling, &edges) as f64;
        let bound = (1.0 + params.tol) * s.density * inst.d_a * s.host.len() as f64;
        if worst4.map_or(true, |(d, b)| deg - bound > d - b) {
            worst4 = Some((deg, bound));
        }
        worst5 = worst5.max(psi_codegree(&labelling, &edges));
    }
    let (d4, b4) = worst4.unwrap_or((0.0, 0.0));
    rows.push(crow("IV", d4, b4, 0.0, d4 <= b4 + 1e-9));
    rows.push(crow("V", worst5 as f64, n.sqrt(), 0.0, worst5 as f64 <= n.sqrt() + 1e-9));

    // (VI) set testers centred at slot 0.
    let mut worst6 = 0.0f64;
    for t in set_testers.iter().filter(|t| t.cluster == s0.cluster) {
        let mut common: HashSet<usize> = t.w.iter().copied().collect();
        for (g, ys) in &t.ys {
            let img: HashSet<usize> = ys.iter().filter_map(|y| packing.sigma.get(*g).and_then(|m| m.get(y))).copied().collect();
            common.retain(|v| img.contains(v));
        }
        worst6 = worst6.max((common.len() as f64 - t.target(n)).abs());
    }
    rows.push(crow("VI", worst6, 0.0, params.tol * n, worst6 <= params.tol * n + 1e-9));

    // (VII) edge testers on slot 0.
    let mut worst7: Option<(f64, f64)> = None;
    let chosen: HashSet<[usize; 3]> = packing.edges().into_iter().collect();
    for t in edge_testers.iter().filter(|t| t.slot == 0) {
        let total: f64 = t.weights.iter().map(|(_, w)| w).sum();
        let on: f64 = t.weights.iter().filter(|(e, _)| chosen.contains(e)).map(|(_, w)| w).sum();
        let d0 = s0.density.max(1e-12);
        let target = total / (d0 * n);
        let dev = (on - target).abs();
        let tol = eps_out * target + params.tol * n;
        if worst7.map_or(true, |(d, tl)| dev - tol > d - tl) {
            worst7 = Some((dev, tol));
        }
    }
    let (d7, t7) = worst7.unwrap_or((0.0, params.tol * n));
    rows.push(crow("VII", d7, 0.0, t7, d7 <= t7 + 1e-9));

    let min_cov = coverage.iter().copied().fold(1.0, f64::min);
    let mut crow_cov = crow("coverage", min_cov, floor, 0.0, min_cov >= floor - 1e-12);
    if let Some((g, _)) = coverage.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
        crow_cov.detail = Some(serde_json::json!({ "guest": g }));
    }
    rows.push(crow_cov);

    // Precondition on the incoming labelling.
    let pre = (0..inst.slots.len())
        .filter(|&i| inst.slots[i].side != SlotSide::B)
        .map(|i| psi_codegree(&inst.labelling, &inst.slot_edges(i)))
        .max()
        .unwrap_or(0);
    rows.push(crow("pre-codegree", pre as f64, n.sqrt(), 0.0, pre as f64 <= n.sqrt() + 1e-9));

    let audits = match &mrep {
        Some(rep) => weights
            .iter()
            .zip(&rep.weights)
            .map(|((name, _), w)| WeightAudit {
                name: name.clone(),
                arity: w.arity,
                total: w.total,
                on_matching: w.on_matching,
                ratio: w.ratio,
            })
            .collect(),
        None => Vec::new(),
    };
    let report = StepReport {
        rows,
        eps_in: params.eps,
        eps_out,
        coverage,
        hyperedges: aux.hypergraph.edge_count(),
        uniformity: aux.hypergraph.uniformity(),
        max_degree: mrep.as_ref().map_or(0, |r| r.max_degree),
        max_codegree: mrep.as_ref().map_or(0, |r| r.max_codegree),
        matched: matching.len(),
        repaired,
        attempts,
        weights: audits,
        sparsified,
    };
    Ok(StepOutcome { packing, candidacy, labelling, report })
}
