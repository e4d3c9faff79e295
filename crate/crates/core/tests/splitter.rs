mod common;

use blowpack::generate::GuestKind;
use blowpack::graph::Graph;
use blowpack::splitter::{
    check_refinement, refine_collection, RefinedPartition, SplitConfig, COND_BALANCED, COND_EDGES, COND_INDEPENDENT,
    COND_WEIGHTS,
};
use blowpack::testers::Weight;
use common::{audit_refinement, guest_collection};
use proptest::prelude::*;

#[test]
fn edgeless_guest_splits_into_halves() {
    let guests = vec![Graph::new(11)];
    let clusters = vec![vec![(0..11).collect::<Vec<_>>()]];
    let w = vec![Weight::Uniform { value: 1.0 }];
    let (rp, rep) = refine_collection(&guests, &clusters, &SplitConfig::new(2, 1), &w).unwrap();
    assert!(rep.all_passed());
    let sizes: Vec<usize> = rp.parts[0][0].iter().map(Vec::len).collect();
    assert_eq!(sizes, vec![5, 6]);
    assert!(rep.max_weight_deviation <= 1.0);
}

#[test]
fn perfect_matching_never_shares_a_sub_cluster() {
    let h = Graph::from_edges(200, (0..100).map(|i| (i, 100 + i))).unwrap();
    let guests = vec![h.clone()];
    let clusters = vec![vec![(0..200).collect::<Vec<_>>()]];
    let (rp, rep) = refine_collection(&guests, &clusters, &SplitConfig::new(4, 3), &[]).unwrap();
    assert!(rep.all_passed());
    for sub in &rp.parts[0][0] {
        for &x in sub {
            assert!(!sub.contains(&((x + 100) % 200)), "matched pair in one sub-cluster");
        }
    }
    let a = audit_refinement(&guests, &clusters, &rp, 4, &[]);
    assert!(a.independent && a.balanced);
}

#[test]
fn triangles_split_with_balanced_degree_weight() {
    let h = Graph::from_edges(180, (0..60).flat_map(|t| [(3 * t, 3 * t + 1), (3 * t + 1, 3 * t + 2), (3 * t, 3 * t + 2)])).unwrap();
    let guests = vec![h];
    let clusters = vec![vec![(0..180).collect::<Vec<_>>()]];
    let w = vec![Weight::Degree];
    let (rp, rep) = refine_collection(&guests, &clusters, &SplitConfig::new(10, 5), &w).unwrap();
    let a = audit_refinement(&guests, &clusters, &rp, 10, &w);
    assert!(a.independent && a.balanced);
    let wdev = a.weight_deviation;
    let tol = 0.1f64.powf(1.5) * 180.0;
    assert!(wdev <= tol, "{wdev} > {tol}");
    assert!((rep.max_weight_deviation - wdev).abs() < 1e-9);
}

#[test]
fn identity_refinement_checks_square_independence_of_clusters() {
    // Path 0-1-2-3: {0, 2} are at distance two, {0, 3} are not.
    let h = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
    let cfg = SplitConfig::new(1, 0);
    let good = vec![vec![vec![0, 3], vec![1], vec![2]]];
    let rp = RefinedPartition { parts: vec![good[0].iter().map(|c| vec![c.clone()]).collect()] };
    let rep = check_refinement(&[h.clone()], &good, &rp, &cfg, &[]);
    assert!(rep.rows.iter().find(|r| r.condition == COND_BALANCED).unwrap().passed);
    assert!(rep.rows.iter().find(|r| r.condition == COND_INDEPENDENT).unwrap().passed);
    let bad = vec![vec![vec![0, 2], vec![1, 3]]];
    let rp = RefinedPartition { parts: vec![bad[0].iter().map(|c| vec![c.clone()]).collect()] };
    let rep = check_refinement(&[h], &bad, &rp, &cfg, &[]);
    assert!(rep.rows.iter().find(|r| r.condition == COND_BALANCED).unwrap().passed);
    assert!(!rep.rows.iter().find(|r| r.condition == COND_INDEPENDENT).unwrap().passed);
}

#[test]
fn matched_pair_in_one_sub_cluster_is_the_witness() {
    let h = Graph::from_edges(8, [(0, 4), (1, 5), (2, 6), (3, 7)]).unwrap();
    let clusters = vec![vec![(0..8).collect::<Vec<_>>()]];
    let rp = RefinedPartition { parts: vec![vec![vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]]] };
    let ok = check_refinement(&[h.clone()], &clusters, &rp, &SplitConfig::new(2, 0), &[]);
    assert!(ok.all_passed());
    let rp = RefinedPartition { parts: vec![vec![vec![vec![0, 1, 2, 4], vec![3, 5, 6, 7]]]] };
    let rep = check_refinement(&[h], &clusters, &rp, &SplitConfig::new(2, 0), &[]);
    let row = rep.rows.iter().find(|r| r.condition == COND_INDEPENDENT).unwrap();
    assert!(!row.passed);
    let w = row.counterexample.as_ref().unwrap();
    assert_eq!((w["x"].as_u64(), w["y"].as_u64()), (Some(0), Some(4)));
}

#[test]
fn too_few_vertices_for_the_part_count_is_a_config_error() {
    let guests = vec![Graph::new(3)];
    let clusters = vec![vec![vec![0, 1, 2]]];
    assert!(refine_collection(&guests, &clusters, &SplitConfig::new(4, 0), &[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_output_passes_an_independent_audit(seed in 0u64..1000, kind in 0usize..3, k in prop::sample::select(vec![6usize, 8])) {
        let kind = [GuestKind::HamiltonCycles, GuestKind::PerfectMatchings, GuestKind::RRegularSmallComponents][kind];
        let (guests, clusters) = guest_collection(seed, kind, 64, 4, 3);
        let w = vec![Weight::Degree];
        let cfg = SplitConfig::new(k, seed);
        let (rp, rep) = refine_collection(&guests, &clusters, &cfg, &w).unwrap();
        let a = audit_refinement(&guests, &clusters, &rp, k, &w);
        prop_assert!(a.independent && a.balanced);
        prop_assert!(a.weight_deviation <= rep.weight_tolerance + 1e-9);
        prop_assert!(a.edge_deviation <= rep.edge_tolerance + 1e-9);
        prop_assert!((rep.max_edge_deviation - a.edge_deviation).abs() < 1e-9);
        for c in [COND_INDEPENDENT, COND_BALANCED, COND_WEIGHTS, COND_EDGES] {
            prop_assert!(rep.rows.iter().any(|r| r.condition == c && r.passed));
        }
    }
}
