//! Seeded instance generators and tester builders for the command line tool,
//! the benchmarks and the acceptance suite.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::instance::{validate_extended_instance, BlowUpInstance, ConditionRow};
use crate::regularity::{quasirandomness_verdict, typicality_verdict, Method, Sampling};
use crate::rng::{self, Rng};
use crate::testers::{SetTester, TesterSuite, VertexTester, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HostKind {
    RandomSuperregularMultipartite,
    ErdosRenyiQuasirandom,
    Typical,
}

impl HostKind {
    pub fn is_quasirandom(self) -> bool {
        !matches!(self, HostKind::RandomSuperregularMultipartite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuestKind {
    HamiltonCycles,
    PerfectMatchings,
    BoundedDegreeTrees,
    /// 2-regular graphs made of short cycles.
    RRegularSmallComponents,
    RandomBoundedDegree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    Uniform,
    Degree,
    Indicator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TesterSpec {
    pub set_testers: usize,
    /// Largest number of guests a set tester constrains.
    pub max_arity: usize,
    pub min_fraction: f64,
    /// Weight kinds placed on every host vertex of the regular clusters.
    pub all_vertices: Vec<WeightKind>,
    /// Extra vertex testers on random host vertices.
    pub random_vertices: usize,
    pub random_kind: WeightKind,
}

impl Default for TesterSpec {
    fn default() -> Self {
        TesterSpec {
            set_testers: 50,
            max_arity: 3,
            min_fraction: 0.2,
            all_vertices: vec![WeightKind::Degree],
            random_vertices: 8,
            random_kind: WeightKind::Indicator,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub host: HostKind,
    /// Cluster size; the order of the host in the quasirandom kinds.
    pub n: usize,
    pub r: usize,
    pub d: f64,
    /// Parameter the generated instance must validate at.
    pub eps: f64,
    pub alpha: f64,
    pub guest: GuestKind,
    pub count: usize,
    pub max_degree: usize,
    /// Guests may use at most this fraction of `d n²` per reduced pair.
    pub edge_budget: f64,
    /// Pre-embedded neighbours per guest; `⌈n/64⌉` when absent.
    pub linked: Option<usize>,
    /// `|V_0|`; `⌈n/8⌉` when absent.
    pub exceptional: Option<usize>,
    pub retries: usize,
    pub testers: TesterSpec,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            host: HostKind::RandomSuperregularMultipartite,
            n: 64,
            r: 3,
            d: 0.5,
            eps: 0.3,
            alpha: 0.25,
            guest: GuestKind::HamiltonCycles,
            count: 8,
            max_degree: 4,
            edge_budget: 0.75,
            linked: None,
            exceptional: None,
            retries: 20,
            testers: TesterSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasirandomInstance {
    pub host: Graph,
    pub guests: Vec<Graph>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub attempts: usize,
    /// Smallest grid value the instance validates at.
    pub measured_eps: f64,
    pub measured_density: f64,
    pub validation: Vec<ConditionRow>,
    /// Largest guest edge load of a reduced pair as a fraction of `d n²`.
    pub max_pair_load: f64,
    pub max_guest_degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub spec: GeneratorSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended: Option<BlowUpInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasirandom: Option<QuasirandomInstance>,
    pub testers: TesterSuite,
    pub report: GenerationReport,
}

/// Grid the measured `ε` is read from.
fn eps_grid() -> Vec<f64> {
    (1..50).map(|k| k as f64 * 0.02).collect()
}

fn cycle_reduced(r: usize) -> Graph {
    let mut g = Graph::new(r + 1);
    if r == 2 {
        let _ = g.add_edge(1, 2);
    } else {
        for i in 1..=r {
            let _ = g.add_edge(i, i % r + 1);
        }
    }
    g
}

fn shuffled(xs: &[usize], rng: &mut Rng) -> Vec<usize> {
    let mut v = xs.to_vec();
    v.shuffle(rng);
    v
}

/// Random tree on `vs` with maximum degree `delta`, grown from a random root
/// by attaching unplaced vertices to open placed ones. `class` groups the
/// vertices and `allowed(a, b)` says which classes may be joined.
fn random_tree(
    g: &mut Graph,
    vs: &[usize],
    delta: usize,
    rng: &mut Rng,
    class: impl Fn(usize) -> usize,
    allowed: impl Fn(usize, usize) -> bool,
) -> Result<()> {
    let order = shuffled(vs, rng);
    let classes = order.iter().map(|&x| class(x)).max().map_or(0, |c| c + 1);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for &x in &order[1..] {
        pools[class(x)].push(x);
    }
    let mut left = order.len() - 1;
    let mut open = vec![order[0]];
    while left > 0 {
        let mut choices: Vec<(usize, usize)> = Vec::new();
        for (k, &y) in open.iter().enumerate() {
            for c in 0..classes {
                if !pools[c].is_empty() && allowed(class(y), c) {
                    choices.push((k, c));
                }
            }
        }
        let &(k, c) = choices
            .choose(rng)
            .ok_or_else(|| Error::RetryExhausted(format!("tree: {left} vertices left without an open attachment point")))?;
        let y = open[k];
        let x = pools[c].pop().unwrap();
        g.add_edge(x, y)?;
        left -= 1;
        if g.degree(y) >= delta {
            open.swap_remove(k);
        }
        open.push(x);
    }
    Ok(())
}

/// One guest on the clusters `xs[1..=r]` (each of size `n`) whose edges only
/// join clusters adjacent in `reduced`.
fn cluster_guest(kind: GuestKind, xs: &[Vec<usize>], reduced: &Graph, delta: usize, rng: &mut Rng) -> Result<Graph> {
    let r = xs.len() - 1;
    let n = xs[1].len();
    let mut g = Graph::new(r * n);
    let perms: Vec<Vec<usize>> = xs.iter().map(|x| shuffled(x, rng)).collect();
    let needs_cycle = |what: &str| -> Result<()> {
        if r < 3 {
            Err(Error::Config(format!("{what} guests need at least 3 clusters")))
        } else {
            Ok(())
        }
    };
    match kind {
        GuestKind::HamiltonCycles => {
            needs_cycle("hamilton-cycle")?;
            let seq: Vec<usize> = (0..r * n).map(|t| perms[t % r + 1][t / r]).collect();
            for t in 0..seq.len() {
                g.add_edge(seq[t], seq[(t + 1) % seq.len()])?;
            }
        }
        GuestKind::PerfectMatchings => {
            if n % 2 == 1 {
                return Err(Error::Config("perfect matchings need an even cluster size".into()));
            }
            if r == 2 {
                for t in 0..n {
                    g.add_edge(perms[1][t], perms[2][t])?;
                }
            } else {
                for i in 1..=r {
                    let j = i % r + 1;
                    for t in 0..n / 2 {
                        g.add_edge(perms[i][n / 2 + t], perms[j][t])?;
                    }
                }
            }
        }
        GuestKind::BoundedDegreeTrees => {
            let all: Vec<usize> = (0..r * n).collect();
            let cl: Vec<usize> = {
                let mut c = vec![0; r * n];
                for (i, x) in xs.iter().enumerate() {
                    for &v in x {
                        c[v] = i;
                    }
                }
                c
            };
            random_tree(&mut g, &all, delta.max(2), rng, |x| cl[x], |a, b| reduced.has_edge(a, b))?;
        }
        GuestKind::RRegularSmallComponents => {
            needs_cycle("cycle-component")?;
            for t in 0..n {
                for i in 1..=r {
                    g.add_edge(perms[i][t], perms[i % r + 1][t])?;
                }
            }
        }
        GuestKind::RandomBoundedDegree => {
            let max_rdeg = (1..=r).map(|i| reduced.degree(i)).max().unwrap_or(1).max(1);
            let layers = (delta / max_rdeg).max(1);
            for (i, j) in reduced.edges() {
                for _ in 0..layers {
                    let (a, b) = (shuffled(&xs[i], rng), shuffled(&xs[j], rng));
                    for (&x, &y) in a.iter().zip(&b) {
                        if rng.gen::<f64>() < 0.75 && g.degree(x) < delta && g.degree(y) < delta {
                            g.add_edge(x, y)?;
                        }
                    }
                }
            }
        }
    }
    Ok(g)
}

/// One guest on `n` vertices without cluster constraints.
fn free_guest(kind: GuestKind, n: usize, delta: usize, rng: &mut Rng) -> Result<Graph> {
    let mut g = Graph::new(n);
    let all: Vec<usize> = (0..n).collect();
    let perm = shuffled(&all, rng);
    match kind {
        GuestKind::HamiltonCycles => {
            if n < 3 {
                return Err(Error::Config("a Hamilton cycle needs 3 vertices".into()));
            }
            for t in 0..n {
                g.add_edge(perm[t], perm[(t + 1) % n])?;
            }
        }
        GuestKind::PerfectMatchings => {
            for t in 0..n / 2 {
                g.add_edge(perm[2 * t], perm[2 * t + 1])?;
            }
        }
        GuestKind::BoundedDegreeTrees => random_tree(&mut g, &all, delta.max(2), rng, |_| 0, |_, _| true)?,
        GuestKind::RRegularSmallComponents => {
            let mut start = 0;
            while n - start >= 3 {
                let mut len = rng.gen_range(3..=8).min(n - start);
                if n - start - len < 3 {
                    len = n - start;
                }
                for t in 0..len {
                    g.add_edge(perm[start + t], perm[start + (t + 1) % len])?;
                }
                start += len;
            }
        }
        GuestKind::RandomBoundedDegree => {
            for _ in 0..delta {
                let p = shuffled(&all, rng);
                for t in 0..n / 2 {
                    let (x, y) = (p[2 * t], p[2 * t + 1]);
                    if rng.gen::<f64>() < 0.75 && g.degree(x) < delta && g.degree(y) < delta && !g.has_edge(x, y) {
                        g.add_edge(x, y)?;
                    }
                }
            }
        }
    }
    Ok(g)
}

fn random_bipartite(g: &mut Graph, a: &[usize], b: &[usize], p: f64, rng: &mut Rng) {
    for &u in a {
        for &v in b {
            if rng.gen::<f64>() < p {
                let _ = g.add_edge(u, v);
            }
        }
    }
}

fn validate_spec(spec: &GeneratorSpec) -> Result<()> {
    let bad = |s: String| Err(Error::Config(s));
    if spec.n < 4 {
        return bad(format!("n = {} too small", spec.n));
    }
    if !spec.host.is_quasirandom() && spec.r < 2 {
        return bad("at least two regular clusters required".into());
    }
    if !(spec.d > 0.0 && spec.d <= 1.0) {
        return bad(format!("density {} not in (0,1]", spec.d));
    }
    if !(spec.eps > 0.0 && spec.eps < 1.0) {
        return bad(format!("eps {} not in (0,1)", spec.eps));
    }
    if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
        return bad(format!("alpha {} not in (0,1]", spec.alpha));
    }
    if spec.max_degree as f64 > 1.0 / spec.alpha + 1e-9 {
        return bad(format!("degree bound {} exceeds 1/alpha", spec.max_degree));
    }
    if spec.testers.max_arity as f64 > 1.0 / spec.alpha + 1e-9 {
        return bad(format!("tester arity {} exceeds 1/alpha", spec.testers.max_arity));
    }
    Ok(())
}

fn pair_load(guests: &[Graph], parts: &[Vec<Vec<usize>>], reduced: &Graph, host_n: usize, d: f64) -> f64 {
    let mut worst = 0.0f64;
    for (i, j) in reduced.edges() {
        let e: usize = guests.iter().zip(parts).map(|(h, p)| h.edges_between(&p[i], &p[j])).sum();
        worst = worst.max(e as f64 / (d * (host_n * host_n) as f64));
    }
    worst
}

/// Builds an extended blow-up instance (or a quasirandom host with guests)
/// plus its testers. Hosts are resampled until they validate at `spec.eps`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<InstanceFile> {
    validate_spec(spec)?;
    if spec.host.is_quasirandom() {
        return generate_quasirandom(spec, seed);
    }
    let (n, r) = (spec.n, spec.r);
    let n0 = spec.exceptional.unwrap_or((n + 7) / 8).max(1);
    let k0 = spec.linked.unwrap_or((n + 63) / 64).min(n0);
    let reduced = cycle_reduced(r);
    let mut grng = rng::child(seed, &[0x6E57]);

    // Guest vertex ids: cluster vertices first, then the pre-embedded ones.
    let xs: Vec<Vec<usize>> = std::iter::once(Vec::new())
        .chain((1..=r).map(|i| (0..n).map(|t| t * r + i - 1).collect()))
        .collect();
    let mut guests = Vec::with_capacity(spec.count);
    let mut guest_partitions = Vec::with_capacity(spec.count);
    let mut phi0 = Vec::new();
    for g in 0..spec.count {
        let body = cluster_guest(spec.guest, &xs, &reduced, spec.max_degree, &mut grng)?;
        let mut h = Graph::new(r * n + k0);
        for (x, y) in body.edges() {
            h.add_edge(x, y)?;
        }
        let open: Vec<usize> = shuffled(&xs[1], &mut grng).into_iter().filter(|&x| h.degree(x) < spec.max_degree).collect();
        if open.len() < k0 {
            return Err(Error::Config(format!("guest {g}: too few vertices of cluster 1 below the degree bound")));
        }
        let mut parts = xs.clone();
        for t in 0..k0 {
            let x0 = r * n + t;
            h.add_edge(x0, open[t])?;
            parts[0].push(x0);
            phi0.push([g, x0, (g * k0 + t) % n0]);
        }
        guests.push(h);
        guest_partitions.push(parts);
    }
    let host_n = n0 + r * n;
    let host_partition: Vec<Vec<usize>> = std::iter::once((0..n0).collect())
        .chain((1..=r).map(|i| (n0 + (i - 1) * n..n0 + i * n).collect()))
        .collect();
    let load = pair_load(&guests, &guest_partitions, &reduced, n, spec.d);
    if load > spec.edge_budget + 1e-9 {
        return Err(Error::Config(format!(
            "guests use {load:.3} of d n² on some reduced pair, above the budget {}",
            spec.edge_budget
        )));
    }

    let mut last = None;
    for attempt in 0..spec.retries.max(1) {
        let mut hr = rng::child(seed, &[0x4057, attempt as u64]);
        let mut host = Graph::new(host_n);
        for (i, j) in reduced.edges() {
            random_bipartite(&mut host, &host_partition[i], &host_partition[j], spec.d, &mut hr);
        }
        random_bipartite(&mut host, &host_partition[0], &host_partition[1], spec.d, &mut hr);
        let inst = BlowUpInstance {
            guests: guests.clone(),
            host,
            reduced: reduced.clone(),
            guest_partitions: guest_partitions.clone(),
            host_partition: host_partition.clone(),
            phi0: phi0.clone(),
        };
        let density = measured_pair_density(&inst);
        let at = |eps: f64| validate_extended_instance(&inst, eps, spec.alpha, density, Method::certificate());
        let report = at(spec.eps)?;
        if !report.all_passed() {
            last = report.rows.into_iter().find(|r| !r.passed);
            continue;
        }
        let grid = eps_grid();
        let mut measured = spec.eps;
        for &e in grid.iter().filter(|&&e| e < spec.eps) {
            if at(e)?.all_passed() {
                measured = e;
                break;
            }
        }
        let validation = at(measured)?.rows;
        let testers = build_testers(&inst, &spec.testers, rng::derive(seed, &[0x7E57]));
        let max_guest_degree = inst.guests.iter().map(|h| h.max_degree()).max().unwrap_or(0);
        return Ok(InstanceFile {
            spec: spec.clone(),
            seed,
            extended: Some(inst),
            quasirandom: None,
            testers,
            report: GenerationReport {
                attempts: attempt + 1,
                measured_eps: measured,
                measured_density: density,
                validation,
                max_pair_load: load,
                max_guest_degree,
            },
        });
    }
    Err(Error::RetryExhausted(format!(
        "host generation failed {} times; last failing condition: {}",
        spec.retries.max(1),
        last.map_or_else(|| "none".into(), |r| serde_json::to_string(&r).unwrap_or_default())
    )))
}

/// Mean density over the reduced pairs.
pub fn measured_pair_density(inst: &BlowUpInstance) -> f64 {
    let (mut e, mut t) = (0.0, 0.0);
    for (i, j) in inst.reduced.edges() {
        e += inst.host.edges_between(&inst.host_partition[i], &inst.host_partition[j]) as f64;
        t += (inst.host_partition[i].len() * inst.host_partition[j].len()) as f64;
    }
    if t == 0.0 {
        0.0
    } else {
        e / t
    }
}

fn generate_quasirandom(spec: &GeneratorSpec, seed: u64) -> Result<InstanceFile> {
    let n = spec.n;
    let mut grng = rng::child(seed, &[0x6E57]);
    let guests: Vec<Graph> =
        (0..spec.count).map(|_| free_guest(spec.guest, n, spec.max_degree, &mut grng)).collect::<Result<_>>()?;
    let used: usize = guests.iter().map(|h| h.edge_count()).sum();
    let load = used as f64 / (spec.d * (n * n) as f64 / 2.0);
    if load > spec.edge_budget + 1e-9 {
        return Err(Error::Config(format!("guests use {load:.3} of d n²/2, above the budget {}", spec.edge_budget)));
    }
    let mut last = String::new();
    for attempt in 0..spec.retries.max(1) {
        let mut hr = rng::child(seed, &[0x4057, attempt as u64]);
        let mut host = Graph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                if hr.gen::<f64>() < spec.d {
                    let _ = host.add_edge(u, v);
                }
            }
        }
        let density = 2.0 * host.edge_count() as f64 / (n * (n - 1)) as f64;
        let sampling = Some(Sampling { seed: rng::derive(seed, &[0x5A, attempt as u64]), samples_per_size: 2000 });
        let at = |eps: f64| -> Result<bool> {
            Ok(match spec.host {
                HostKind::Typical => typicality_verdict(&host, eps, 3, density, sampling)?.accepted,
                _ => quasirandomness_verdict(&host, eps, density)?.accepted,
            })
        };
        if !at(spec.eps)? {
            last = format!("host rejected at eps {}", spec.eps);
            continue;
        }
        let mut measured = spec.eps;
        for &e in eps_grid().iter().filter(|&&e| e < spec.eps) {
            if at(e)? {
                measured = e;
                break;
            }
        }
        let whole: Vec<usize> = (0..n).collect();
        let testers = build_quasirandom_testers(&guests, &whole, &spec.testers, rng::derive(seed, &[0x7E57]));
        return Ok(InstanceFile {
            spec: spec.clone(),
            seed,
            extended: None,
            quasirandom: Some(QuasirandomInstance { host, guests: guests.clone() }),
            testers,
            report: GenerationReport {
                attempts: attempt + 1,
                measured_eps: measured,
                measured_density: density,
                validation: Vec::new(),
                max_pair_load: load,
                max_guest_degree: guests.iter().map(|h| h.max_degree()).max().unwrap_or(0),
            },
        });
    }
    Err(Error::RetryExhausted(format!("quasirandom host: {last} after {} attempts", spec.retries.max(1))))
}

fn random_subset(xs: &[usize], frac: f64, rng: &mut Rng) -> Vec<usize> {
    let k = ((frac * xs.len() as f64).round() as usize).clamp(1, xs.len().max(1)).min(xs.len());
    let mut v = shuffled(xs, rng);
    v.truncate(k);
    v.sort_unstable();
    v
}

fn weight_of(kind: WeightKind, guests: &[Graph], members_from: &[Vec<usize>], rng: &mut Rng) -> Weight {
    match kind {
        WeightKind::Uniform => Weight::Uniform { value: 1.0 },
        WeightKind::Degree => Weight::Degree,
        WeightKind::Indicator => {
            let mut m = Vec::new();
            for (g, xs) in members_from.iter().enumerate().take(guests.len()) {
                for x in random_subset(xs, 0.5, rng) {
                    m.push([g, x]);
                }
            }
            Weight::indicator(m)
        }
    }
}

/// Set testers on random clusters and vertex testers as described by `spec`.
pub fn build_testers(inst: &BlowUpInstance, spec: &TesterSpec, seed: u64) -> TesterSuite {
    let mut rng = rng::child(seed, &[]);
    let r = inst.r();
    let ng = inst.guests.len();
    let mut suite = TesterSuite::default();
    if r == 0 {
        return suite;
    }
    for _ in 0..spec.set_testers {
        let i = rng.gen_range(1..=r);
        let arity = rng.gen_range(1..=spec.max_arity.max(1)).min(ng);
        let mut picks: Vec<usize> = (0..ng).collect();
        picks.shuffle(&mut rng);
        picks.truncate(arity);
        picks.sort_unstable();
        let frac = |rng: &mut Rng| rng.gen_range(spec.min_fraction..=1.0);
        let f = frac(&mut rng);
        let w = random_subset(&inst.host_partition[i], f, &mut rng);
        let ys = picks
            .into_iter()
            .map(|g| {
                let f = frac(&mut rng);
                (g, random_subset(&inst.guest_partitions[g][i], f, &mut rng))
            })
            .collect();
        suite.set_testers.push(SetTester { cluster: i, w, ys });
    }
    for &kind in &spec.all_vertices {
        for i in 1..=r {
            let from: Vec<Vec<usize>> = inst.guest_partitions.iter().map(|p| p[i].clone()).collect();
            for &v in &inst.host_partition[i] {
                let weight = weight_of(kind, &inst.guests, &from, &mut rng);
                suite.vertex_testers.push(VertexTester { cluster: i, v, weight });
            }
        }
    }
    for _ in 0..spec.random_vertices {
        let i = rng.gen_range(1..=r);
        let v = *inst.host_partition[i].choose(&mut rng).unwrap();
        let from: Vec<Vec<usize>> = inst.guest_partitions.iter().map(|p| p[i].clone()).collect();
        let weight = weight_of(spec.random_kind, &inst.guests, &from, &mut rng);
        suite.vertex_testers.push(VertexTester { cluster: i, v, weight });
    }
    suite
}

/// Testers for a quasirandom host, all in cluster 1 (the whole host).
pub fn build_quasirandom_testers(guests: &[Graph], host: &[usize], spec: &TesterSpec, seed: u64) -> TesterSuite {
    let mut rng = rng::child(seed, &[]);
    let ng = guests.len();
    let from: Vec<Vec<usize>> = guests.iter().map(|h| (0..h.vertex_count()).collect()).collect();
    let mut suite = TesterSuite::default();
    for _ in 0..spec.set_testers {
        let arity = rng.gen_range(1..=spec.max_arity.max(1)).min(ng);
        let mut picks: Vec<usize> = (0..ng).collect();
        picks.shuffle(&mut rng);
        picks.truncate(arity);
        picks.sort_unstable();
        let f = rng.gen_range(spec.min_fraction..=1.0);
        let w = random_subset(host, f, &mut rng);
        let ys = picks
            .into_iter()
            .map(|g| {
                let f = rng.gen_range(spec.min_fraction..=1.0);
                (g, random_subset(&from[g], f, &mut rng))
            })
            .collect();
        suite.set_testers.push(SetTester { cluster: 1, w, ys });
    }
    for &kind in &spec.all_vertices {
        for &v in host {
            let weight = weight_of(kind, guests, &from, &mut rng);
            suite.vertex_testers.push(VertexTester { cluster: 1, v, weight });
        }
    }
    for _ in 0..spec.random_vertices {
        let v = *host.choose(&mut rng).unwrap();
        let weight = weight_of(spec.random_kind, guests, &from, &mut rng);
        suite.vertex_testers.push(VertexTester { cluster: 1, v, weight });
    }
    suite
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(guest: GuestKind) -> GeneratorSpec {
        GeneratorSpec { n: 32, r: 3, d: 0.6, eps: 0.5, guest, count: 4, ..GeneratorSpec::default() }
    }

    #[test]
    fn hamilton_guests_have_degree_two_plus_links() {
        let f = generate(&spec(GuestKind::HamiltonCycles), 1).unwrap();
        let inst = f.extended.unwrap();
        inst.check_structure().unwrap();
        for (h, parts) in inst.guests.iter().zip(&inst.guest_partitions) {
            for i in 1..=3 {
                for &x in &parts[i] {
                    let linked = h.neighbours(x).any(|y| parts[0].contains(&y)) as usize;
                    assert_eq!(h.degree(x), 2 + linked);
                }
            }
        }
    }

    #[test]
    fn every_guest_kind_builds_a_valid_instance() {
        for kind in [
            GuestKind::HamiltonCycles,
            GuestKind::PerfectMatchings,
            GuestKind::BoundedDegreeTrees,
            GuestKind::RRegularSmallComponents,
            GuestKind::RandomBoundedDegree,
        ] {
            let f = generate(&spec(kind), 3).unwrap();
            let inst = f.extended.unwrap();
            inst.check_structure().unwrap();
            assert!(f.report.validation.iter().all(|r| r.passed), "{kind:?}");
            assert!(f.report.max_guest_degree <= 4);
            assert!(f.report.measured_eps <= 0.5);
        }
    }

    #[test]
    fn tree_guests_are_spanning_trees_on_the_clusters() {
        let f = generate(&spec(GuestKind::BoundedDegreeTrees), 5).unwrap();
        let inst = f.extended.unwrap();
        let k0 = inst.guest_partitions[0][0].len();
        for h in &inst.guests {
            assert_eq!(h.edge_count(), 3 * 32 - 1 + k0);
        }
    }

    #[test]
    fn edge_budget_is_enforced() {
        let s = GeneratorSpec { count: 40, n: 16, d: 0.5, edge_budget: 0.75, eps: 0.9, ..spec(GuestKind::HamiltonCycles) };
        assert!(matches!(generate(&s, 1), Err(Error::Config(_))));
    }

    #[test]
    fn complete_multipartite_host_validates_with_density_one() {
        let s = GeneratorSpec { d: 1.0, eps: 0.3, ..spec(GuestKind::PerfectMatchings) };
        let f = generate(&s, 2).unwrap();
        assert_eq!(f.report.measured_density, 1.0);
    }

    #[test]
    fn quasirandom_instance_has_guests_on_the_host_order() {
        let s = GeneratorSpec { host: HostKind::ErdosRenyiQuasirandom, n: 64, eps: 0.3, ..spec(GuestKind::HamiltonCycles) };
        let f = generate(&s, 4).unwrap();
        let q = f.quasirandom.unwrap();
        assert!(q.guests.iter().all(|h| h.vertex_count() == 64 && h.edge_count() == 64));
        assert!(f.testers.set_testers.iter().all(|t| t.cluster == 1));
    }

    #[test]
    fn generation_is_seed_stable() {
        let a = generate(&spec(GuestKind::RandomBoundedDegree), 9).unwrap();
        let b = generate(&spec(GuestKind::RandomBoundedDegree), 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
