//! Embedding a single bounded-degree guest into a blow-up instance while
//! respecting per-vertex candidate sets: random greedy with swap and
//! kick-out repair, seeded restarts, and exhaustive search at tiny scale.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BipartitePair, Graph};
use crate::rng;

/// `candidates[i]` is a local pair: left index `a` is `guest_parts[i][a]`,
/// right index `b` is `host_parts[i][b]`. Guest vertices outside every part
/// are ignored, and so are their edges. Guest edges inside a part are
/// allowed and must land on host edges inside its host part.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTask {
    pub guest: Graph,
    pub host: Graph,
    pub guest_parts: Vec<Vec<usize>>,
    pub host_parts: Vec<Vec<usize>>,
    pub candidates: Vec<BipartitePair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams {
    pub seed: u64,
    /// Repairs allowed per vertex within one run.
    pub max_backtrack: usize,
    pub restarts: usize,
    /// Exhaustive search is tried when every part is at most this large.
    pub exhaustive_limit: usize,
}

impl EmbedParams {
    pub fn new(seed: u64) -> EmbedParams {
        EmbedParams { seed, max_backtrack: 50, restarts: 20, exhaustive_limit: 8 }
    }
}

/// Guest vertex → host vertex.
pub type Embedding = BTreeMap<usize, usize>;

struct Layout {
    /// Task vertices in id order.
    order: Vec<usize>,
    /// guest vertex → (part, local index).
    at: Vec<Option<(usize, usize)>>,
    /// Task-internal neighbours per guest vertex.
    nbrs: Vec<Vec<usize>>,
}

impl EmbeddingTask {
    pub fn check(&self) -> Result<()> {
        let err = |s: String| Err(Error::Structure(s));
        if self.guest_parts.len() != self.host_parts.len() || self.candidates.len() != self.guest_parts.len() {
            return err("guest parts, host parts and candidate graphs must align".into());
        }
        for (i, (xs, vs)) in self.guest_parts.iter().zip(&self.host_parts).enumerate() {
            if xs.len() != vs.len() {
                return err(format!("part {i}: {} guest vertices but {} host vertices", xs.len(), vs.len()));
            }
            let c = &self.candidates[i];
            if c.left_len() != xs.len() || c.right_len() != vs.len() {
                return err(format!("part {i}: candidate graph has the wrong shape"));
            }
            if vs.iter().any(|&v| v >= self.host.vertex_count()) {
                return err(format!("part {i}: host vertex out of range"));
            }
        }
        let mut seen = vec![false; self.guest.vertex_count()];
        for &x in self.guest_parts.iter().flatten() {
            if x >= seen.len() || seen[x] {
                return err(format!("guest vertex {x} repeated or out of range"));
            }
            seen[x] = true;
        }
        let mut hseen = vec![false; self.host.vertex_count()];
        for &v in self.host_parts.iter().flatten() {
            if hseen[v] {
                return err(format!("host vertex {v} repeated"));
            }
            hseen[v] = true;
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let mut at = vec![None; self.guest.vertex_count()];
        for (i, xs) in self.guest_parts.iter().enumerate() {
            for (a, &x) in xs.iter().enumerate() {
                at[x] = Some((i, a));
            }
        }
        let mut order: Vec<usize> = self.guest_parts.iter().flatten().copied().collect();
        order.sort_unstable();
        let nbrs = (0..self.guest.vertex_count())
            .map(|x| if at[x].is_some() { self.guest.neighbours(x).filter(|&y| at[y].is_some()).collect() } else { Vec::new() })
            .collect();
        Layout { order, at, nbrs }
    }

    /// Local host indices of `x`'s part that are candidates for `x` and
    /// adjacent to the images of all embedded neighbours.
    fn compatible(&self, lay: &Layout, phi: &[Option<usize>], x: usize) -> Vec<usize> {
        let (i, a) = lay.at[x].expect("task vertex");
        let hp = &self.host_parts[i];
        let fixed: Vec<usize> = lay.nbrs[x].iter().filter_map(|&y| phi[y]).collect();
        self.candidates[i]
            .left_neighbours(a)
            .ones()
            .filter(|&b| fixed.iter().all(|&u| self.host.has_edge(u, hp[b])))
            .collect()
    }
}

/// Exact checks on a finished embedding: every task vertex is mapped, each
/// part goes bijectively onto its host part, images are candidates, and
/// task-internal guest edges land on host edges.
pub fn check_embedding(task: &EmbeddingTask, phi: &Embedding) -> Result<()> {
    let lay = task.layout();
    for (i, (xs, vs)) in task.guest_parts.iter().zip(&task.host_parts).enumerate() {
        let pos: BTreeMap<usize, usize> = vs.iter().enumerate().map(|(b, &v)| (v, b)).collect();
        let mut hit = vec![false; vs.len()];
        for (a, &x) in xs.iter().enumerate() {
            let v = *phi.get(&x).ok_or_else(|| Error::Structure(format!("vertex {x} is not embedded")))?;
            let b = *pos.get(&v).ok_or_else(|| Error::Structure(format!("vertex {x} left its part: {v}")))?;
            if hit[b] {
                return Err(Error::Structure(format!("part {i}: host vertex {v} used twice")));
            }
            hit[b] = true;
            if !task.candidates[i].has_edge(a, b) {
                return Err(Error::Structure(format!("vertex {x} mapped to non-candidate {v}")));
            }
        }
    }
    for &x in &lay.order {
        for &y in &lay.nbrs[x] {
            if x < y && !task.host.has_edge(phi[&x], phi[&y]) {
                return Err(Error::Structure(format!("guest edge {x}-{y} maps to non-edge {}-{}", phi[&x], phi[&y])));
            }
        }
    }
    Ok(())
}

struct Stuck {
    vertex: usize,
    live: Vec<usize>,
    reason: String,
}

fn run_once(task: &EmbeddingTask, lay: &Layout, params: &EmbedParams, seed: u64) -> std::result::Result<Embedding, Stuck> {
    let mut r = rng::rng(seed);
    let nv = task.guest.vertex_count();
    let mut phi: Vec<Option<usize>> = vec![None; nv];
    // owner[i][b]: guest vertex occupying local host slot b of part i.
    let mut owner: Vec<Vec<Option<usize>>> = task.host_parts.iter().map(|v| vec![None; v.len()]).collect();
    let mut placed_nbrs = vec![0usize; nv];
    let cand_deg: Vec<usize> = (0..nv)
        .map(|x| lay.at[x].map_or(0, |(i, a)| task.candidates[i].left_degree(a)))
        .collect();
    let mut pending: Vec<usize> = lay.order.clone();
    let mut repairs = vec![0usize; nv];
    let place = |phi: &mut Vec<Option<usize>>, owner: &mut Vec<Vec<Option<usize>>>, placed: &mut Vec<usize>, x: usize, b: usize| {
        let (i, _) = lay.at[x].unwrap();
        phi[x] = Some(task.host_parts[i][b]);
        owner[i][b] = Some(x);
        for &y in &lay.nbrs[x] {
            placed[y] += 1;
        }
    };
    let unplace = |phi: &mut Vec<Option<usize>>, owner: &mut Vec<Vec<Option<usize>>>, placed: &mut Vec<usize>, x: usize, b: usize| {
        let (i, _) = lay.at[x].unwrap();
        phi[x] = None;
        owner[i][b] = None;
        for &y in &lay.nbrs[x] {
            placed[y] -= 1;
        }
    };
    let slot_of = |phi: &Vec<Option<usize>>, x: usize| -> usize {
        let (i, _) = lay.at[x].unwrap();
        let v = phi[x].unwrap();
        task.host_parts[i].iter().position(|&u| u == v).unwrap()
    };
    while !pending.is_empty() {
        let k = (0..pending.len())
            .min_by_key(|&k| {
                let x = pending[k];
                (std::cmp::Reverse(placed_nbrs[x]), cand_deg[x], x)
            })
            .unwrap();
        let x = pending.swap_remove(k);
        let (i, _) = lay.at[x].unwrap();
        let compat = task.compatible(lay, &phi, x);
        let free: Vec<usize> = compat.iter().copied().filter(|&b| owner[i][b].is_none()).collect();
        if let Some(&b) = free.choose(&mut r) {
            place(&mut phi, &mut owner, &mut placed_nbrs, x, b);
            continue;
        }
        if compat.is_empty() {
            return Err(Stuck { vertex: x, live: Vec::new(), reason: "no candidate is adjacent to the embedded neighbours".into() });
        }
        repairs[x] += 1;
        if repairs[x] > params.max_backtrack {
            let live = compat.iter().map(|&b| task.host_parts[i][b]).collect();
            return Err(Stuck { vertex: x, live, reason: "repair budget exhausted".into() });
        }
        // Swap: move an occupant of a compatible slot to a free slot of its own.
        let mut order = compat.clone();
        order.shuffle(&mut r);
        let mut swapped = false;
        for &w in &order {
            let y = owner[i][w].unwrap();
            let wy = slot_of(&phi, y);
            unplace(&mut phi, &mut owner, &mut placed_nbrs, y, wy);
            let alt: Vec<usize> =
                task.compatible(lay, &phi, y).into_iter().filter(|&u| u != w && owner[i][u].is_none()).collect();
            if let Some(&u) = alt.choose(&mut r) {
                place(&mut phi, &mut owner, &mut placed_nbrs, y, u);
                place(&mut phi, &mut owner, &mut placed_nbrs, x, w);
                swapped = true;
                break;
            }
            place(&mut phi, &mut owner, &mut placed_nbrs, y, wy);
        }
        if swapped {
            continue;
        }
        // Kick-out: take a compatible slot and send its occupant back.
        let w = order[0];
        let y = owner[i][w].unwrap();
        unplace(&mut phi, &mut owner, &mut placed_nbrs, y, w);
        place(&mut phi, &mut owner, &mut placed_nbrs, x, w);
        pending.push(y);
    }
    Ok(lay.order.iter().map(|&x| (x, phi[x].unwrap())).collect())
}

/// Depth-first search over all assignments in breadth-first guest order.
/// Returns `None` when the task is infeasible.
pub fn exhaustive_embed(task: &EmbeddingTask) -> Option<Embedding> {
    let mut budget = usize::MAX;
    search(task, &mut budget).flatten()
}

/// Outer `None` means the node budget ran out before the search finished.
fn search(task: &EmbeddingTask, budget: &mut usize) -> Option<Option<Embedding>> {
    let lay = task.layout();
    let nv = task.guest.vertex_count();
    let mut seq = Vec::with_capacity(lay.order.len());
    let mut seen = vec![false; nv];
    for &s in &lay.order {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = std::collections::VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            seq.push(x);
            for &y in &lay.nbrs[x] {
                if !seen[y] {
                    seen[y] = true;
                    q.push_back(y);
                }
            }
        }
    }
    let mut phi = vec![None; nv];
    let mut used: Vec<Vec<bool>> = task.host_parts.iter().map(|v| vec![false; v.len()]).collect();
    fn dfs(
        task: &EmbeddingTask,
        lay: &Layout,
        seq: &[usize],
        k: usize,
        phi: &mut Vec<Option<usize>>,
        used: &mut Vec<Vec<bool>>,
        budget: &mut usize,
    ) -> bool {
        let Some(&x) = seq.get(k) else { return true };
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        let (i, _) = lay.at[x].unwrap();
        for b in task.compatible(lay, phi, x) {
            if used[i][b] {
                continue;
            }
            used[i][b] = true;
            phi[x] = Some(task.host_parts[i][b]);
            if dfs(task, lay, seq, k + 1, phi, used, budget) {
                return true;
            }
            phi[x] = None;
            used[i][b] = false;
        }
        false
    }
    if dfs(task, &lay, &seq, 0, &mut phi, &mut used, budget) {
        Some(Some(lay.order.iter().map(|&x| (x, phi[x].unwrap())).collect()))
    } else if *budget == 0 {
        None
    } else {
        Some(None)
    }
}

/// Embeds the task or reports the vertex the first run got stuck at.
pub fn embed_single(task: &EmbeddingTask, params: &EmbedParams) -> Result<Embedding> {
    task.check()?;
    let lay = task.layout();
    let attempt = |k: usize| run_once(task, &lay, params, rng::derive(params.seed, &[k as u64]));
    let first = match attempt(0) {
        Ok(phi) => Some(phi),
        Err(stuck) => {
            let rest = (1..params.restarts.max(1)).into_par_iter().find_map_first(|k| attempt(k).ok());
            match rest {
                Some(phi) => Some(phi),
                None => {
                    let small = task.guest_parts.iter().all(|p| p.len() <= params.exhaustive_limit);
                    match small.then(|| search(task, &mut 5_000_000)).flatten().flatten() {
                        Some(phi) => Some(phi),
                        None => {
                            return Err(Error::Embedding {
                                vertex: stuck.vertex,
                                live_candidates: stuck.live,
                                reason: stuck.reason,
                            })
                        }
                    }
                }
            }
        }
    };
    let phi = first.expect("set above");
    check_embedding(task, &phi)?;
    Ok(phi)
}
