use std::collections::VecDeque;

use blowpack::generate::{generate, GeneratorSpec, GuestKind, HostKind};
use blowpack::graph::Graph;
use blowpack::instance::BlowUpInstance;
use blowpack::orchestrator::{
    colour_schedule, pack_extended, pack_matching_case, pack_quasirandom, verify_result, PackingResult, PipelineConfig,
    CHECK_CLUSTERS, CHECK_DISJOINT, CHECK_EDGES, CHECK_INJECTIVE,
};
use blowpack::testers::{TesterSuite, VertexTester, Weight};

/// `V_1 = {0,1,2}`, `V_2 = {3,4,5}` with `K_{3,3}` between them; two guests,
/// each the perfect matching `0-3, 1-4, 2-5`.
fn six_vertex_instance() -> BlowUpInstance {
    let host = Graph::from_edges(6, (0..3).flat_map(|u| (3..6).map(move |v| (u, v)))).unwrap();
    let guest = Graph::from_edges(6, [(0, 3), (1, 4), (2, 5)]).unwrap();
    BlowUpInstance {
        guests: vec![guest.clone(), guest],
        host,
        reduced: Graph::from_edges(3, [(1, 2)]).unwrap(),
        guest_partitions: vec![vec![vec![], vec![0, 1, 2], vec![3, 4, 5]]; 2],
        host_partition: vec![vec![], vec![0, 1, 2], vec![3, 4, 5]],
        phi0: Vec::new(),
    }
}

fn result_of(phi: Vec<Vec<[usize; 2]>>) -> PackingResult {
    PackingResult { phi, ..PackingResult::default() }
}

#[test]
fn hand_built_packing_verifies() {
    let inst = six_vertex_instance();
    let identity: Vec<[usize; 2]> = (0..6).map(|x| [x, x]).collect();
    let shifted = vec![[0, 0], [1, 1], [2, 2], [3, 4], [4, 5], [5, 3]];
    let rep = verify_result(&result_of(vec![identity, shifted]), &inst, &TesterSuite::default(), 0.25);
    assert!(rep.valid(), "{:?}", rep.rows);
}

#[test]
fn reused_host_edge_is_reported_with_its_pair() {
    let inst = six_vertex_instance();
    let identity: Vec<[usize; 2]> = (0..6).map(|x| [x, x]).collect();
    // Guest 1 maps 0-3 onto host edge 0-3, already used by guest 0.
    let clash = vec![[0, 0], [1, 1], [2, 2], [3, 3], [4, 5], [5, 4]];
    let rep = verify_result(&result_of(vec![identity, clash]), &inst, &TesterSuite::default(), 0.25);
    let row = rep.row(CHECK_DISJOINT).unwrap();
    assert!(!row.passed);
    let w = row.counterexample.as_ref().unwrap().to_string();
    assert!(w.contains('0') && w.contains('3'), "{w}");
    assert!(rep.row(CHECK_EDGES).unwrap().passed);
}

#[test]
fn image_off_the_host_edges_and_out_of_cluster_are_caught() {
    let inst = six_vertex_instance();
    let identity: Vec<[usize; 2]> = (0..6).map(|x| [x, x]).collect();
    // 0 -> 1 and 1 -> 0 inside V_1 keep clusters; 3 -> 1 leaves V_2 and
    // collides with the image of 0.
    let bad = vec![[0, 1], [1, 0], [2, 2], [3, 1], [4, 5], [5, 4]];
    let rep = verify_result(&result_of(vec![identity, bad]), &inst, &TesterSuite::default(), 0.25);
    assert!(!rep.row(CHECK_INJECTIVE).unwrap().passed);
    assert!(!rep.row(CHECK_EDGES).unwrap().passed);
    assert!(!rep.row(CHECK_CLUSTERS).unwrap().passed);
}

#[test]
fn empty_collection_packs_to_nothing() {
    let mut inst = six_vertex_instance();
    inst.guests.clear();
    inst.guest_partitions.clear();
    let testers = TesterSuite {
        set_testers: Vec::new(),
        vertex_testers: vec![VertexTester { cluster: 1, v: 0, weight: Weight::Degree }],
    };
    let res = pack_extended(&inst, &testers, &PipelineConfig::new(1)).unwrap();
    assert!(res.valid());
    assert!(res.phi.is_empty());
    let t = &res.report.verification.vertex_testers[0];
    assert_eq!((t.value, t.target), (0.0, 0.0));
    let q = pack_quasirandom(&Graph::complete(8), &[], &TesterSuite::default(), &PipelineConfig::new(1)).unwrap();
    assert!(q.phi.is_empty() && q.valid());
}

#[test]
fn single_matching_guest_packs_into_a_complete_pair() {
    let spec = GeneratorSpec { r: 2, n: 48, d: 1.0, count: 1, linked: Some(0), guest: GuestKind::PerfectMatchings, max_degree: 2, ..GeneratorSpec::default() };
    let file = generate(&spec, 3).unwrap();
    let inst = file.extended.unwrap();
    let mut cfg = PipelineConfig::new(3);
    cfg.snapshots = true;
    let res = pack_matching_case(&inst, &file.testers, &cfg).unwrap();
    assert!(res.valid(), "{:?}", res.report.verification.rows);
    // The leftover is G minus exactly one perfect matching.
    let map: std::collections::HashMap<usize, usize> = res.phi[0].iter().map(|&[x, v]| (x, v)).collect();
    let mut leftover = inst.host.clone();
    for (x, y) in inst.guests[0].edges() {
        assert!(leftover.remove_edge(map[&x], map[&y]));
    }
    let pairs = inst.host_partition[1].iter().filter(|&&v| leftover.degree_into(v, &blowpack::graph::bitset_of(leftover.vertex_count(), inst.host_partition[2].iter().copied())) == 47).count();
    assert_eq!(pairs, 48);
    // Every snapshot extends the previous one.
    let snaps = &res.report.ledger.snapshots;
    assert!(!snaps.is_empty());
    for w in snaps.windows(2) {
        for (a, b) in w[0].phi.iter().zip(&w[1].phi) {
            assert!(a.iter().all(|p| b.contains(p)), "t = {}", w[1].t);
        }
    }
    let ledger = &res.report.ledger;
    let row = |name: &str| ledger.provenance.iter().find(|r| r.condition == name).unwrap().passed;
    assert!(row("steps-use-slice-a"));
    let widened = ledger.completion.rows.iter().any(|r| r.widened && r.success);
    assert_eq!(row("completion-uses-slice-b"), !widened || ledger.completion.edges_outside_slice == 0);
}

#[test]
fn empty_exceptional_sets_start_from_a_holding_state() {
    let spec = GeneratorSpec { n: 64, linked: Some(0), exceptional: Some(4), count: 4, ..GeneratorSpec::default() };
    let file = generate(&spec, 8).unwrap();
    let inst = file.extended.unwrap();
    assert!(inst.guest_partitions.iter().all(|p| p[0].is_empty()));
    let res = pack_extended(&inst, &file.testers, &PipelineConfig::new(8)).unwrap();
    assert!(res.valid(), "{:?}", res.report.verification.rows);
    assert!(res.report.ledger.entries[0].holds());
}

#[test]
fn ledger_counts_follow_the_reduced_graph() {
    let spec = GeneratorSpec { n: 64, r: 4, count: 4, guest: GuestKind::PerfectMatchings, max_degree: 2, ..GeneratorSpec::default() };
    let file = generate(&spec, 12).unwrap();
    let inst = file.extended.unwrap();
    let res = pack_matching_case(&inst, &file.testers, &PipelineConfig::new(12)).unwrap();
    let entries = &res.report.ledger.entries;
    assert_eq!(entries.len(), inst.r() + 1);
    for w in entries.windows(2) {
        let k = w[1].cluster.unwrap();
        for i in 1..=inst.r() {
            let step = inst.reduced.has_edge(i, k) as usize;
            assert_eq!(w[1].m[i], w[0].m[i] + step, "t = {}, cluster {i}", w[1].t);
        }
    }
    // Clusters run in colour order.
    let colours: Vec<usize> = entries[1..].iter().map(|e| e.colour.unwrap()).collect();
    assert!(colours.windows(2).all(|c| c[0] <= c[1]));
}

/// Distance-at-most-3 adjacency in `r` restricted to vertices `1..`.
fn cube_by_bfs(r: &Graph) -> Graph {
    let n = r.vertex_count();
    let mut out = Graph::new(n);
    for s in 1..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for w in r.neighbours(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
            }
        }
        for w in 1..n {
            if w != s && dist[w] <= 3 {
                out.add_edge(s, w).unwrap();
            }
        }
    }
    out
}

#[test]
fn colour_schedule_is_a_proper_colouring_of_the_cube() {
    for len in [6usize, 12, 13] {
        let r = Graph::from_edges(len + 1, (1..=len).map(|i| (i, i % len + 1))).unwrap();
        let (colour, order) = colour_schedule(&r);
        let c3 = cube_by_bfs(&r);
        for (a, b) in c3.edges() {
            assert_ne!(colour[a], colour[b], "C_{len}: {a} {b}");
        }
        assert!(order.windows(2).all(|w| colour[w[0]] <= colour[w[1]]));
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (1..=len).collect::<Vec<_>>());
        assert!(*colour.iter().max().unwrap() <= c3.max_degree() + 1);
    }
    // C_6 has diameter 3, so its cube is complete.
    let r = Graph::from_edges(7, (1..=6).map(|i| (i, i % 6 + 1))).unwrap();
    assert_eq!(*colour_schedule(&r).0.iter().max().unwrap(), 6);
}

#[test]
fn single_edges_pack_into_a_complete_host() {
    let n = 16;
    let guests: Vec<Graph> = (0..n / 2).map(|i| Graph::from_edges(n, [(2 * i, 2 * i + 1)]).unwrap()).collect();
    let res = pack_quasirandom(&Graph::complete(n), &guests, &TesterSuite::default(), &PipelineConfig::new(2)).unwrap();
    assert!(res.valid(), "{:?}", res.report.verification.rows);
}

#[test]
fn two_hamilton_cycles_leave_the_expected_degrees() {
    let spec = GeneratorSpec {
        host: HostKind::ErdosRenyiQuasirandom,
        n: 200,
        d: 0.5,
        count: 2,
        guest: GuestKind::HamiltonCycles,
        ..GeneratorSpec::default()
    };
    let file = generate(&spec, 6).unwrap();
    let q = file.quasirandom.unwrap();
    let res = pack_quasirandom(&q.host, &q.guests, &file.testers, &PipelineConfig::new(6)).unwrap();
    assert!(res.valid(), "{:?}", res.report.verification.rows);
    // Each cycle takes exactly two edges at every host vertex.
    let mut used = vec![0usize; 200];
    for (g, h) in q.guests.iter().enumerate() {
        let map: std::collections::HashMap<usize, usize> = res.phi[g].iter().map(|&[x, v]| (x, v)).collect();
        for (x, y) in h.edges() {
            used[map[&x]] += 1;
            used[map[&y]] += 1;
        }
    }
    assert!(used.iter().all(|&u| u == 4));
    let leftover = &res.report.verification.leftover;
    assert!(leftover.within);
    assert!(leftover.max_deviation <= 0.25 * 200.0);
}
