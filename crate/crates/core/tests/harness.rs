use blowpack::generate::{generate, GeneratorSpec, GuestKind, InstanceFile};
use blowpack::instance::validate_extended_instance;
use blowpack::io::{from_json, to_canonical_json};
use blowpack::regularity::{super_regularity_verdict, Method};
use blowpack::graph::BipartitePair;
use blowpack::Error;
use proptest::prelude::*;

#[test]
fn complete_multipartite_host_validates_at_small_epsilon() {
    let spec = GeneratorSpec { n: 32, d: 1.0, eps: 0.05, count: 4, linked: Some(0), guest: GuestKind::PerfectMatchings, ..GeneratorSpec::default() };
    let file = generate(&spec, 1).unwrap();
    assert_eq!(file.report.measured_density, 1.0);
    assert!(file.report.validation.iter().all(|r| r.passed));
}

/// Largest deviation |deg(v) - d·|other side|| over both sides of the pair.
fn worst_degree_ratio(pair: &BipartitePair, d: f64) -> f64 {
    let (a, b) = (pair.left_len(), pair.right_len());
    let left = (0..a).map(|u| (pair.left_degree(u) as f64 - d * b as f64).abs() / b as f64);
    let right = (0..b).map(|v| (pair.right_degree(v) as f64 - d * a as f64).abs() / a as f64);
    left.chain(right).fold(0.0, f64::max)
}

#[test]
fn dense_random_host_certificate_at_one_tenth_follows_the_degree_scan() {
    let spec = GeneratorSpec { n: 256, r: 4, d: 0.6, eps: 0.3, count: 4, ..GeneratorSpec::default() };
    // Seed 5 is accepted on every pair; seed 1 has a vertex of degree 126 < 128.
    for (seed, expect) in [(5, true), (1, false)] {
        let inst = generate(&spec, seed).unwrap().extended.unwrap();
        let mut all = true;
        for (i, j) in inst.reduced.edges() {
            let pair = inst.host_pair(i, j).unwrap();
            let v = super_regularity_verdict(&pair, 0.1, 0.6, Method::certificate()).unwrap();
            if worst_degree_ratio(&pair, 0.6) > 0.1 {
                assert!(!v.accepted, "seed {seed} pair {i}-{j}");
            }
            all &= v.accepted;
        }
        assert_eq!(all, expect, "seed {seed}");
    }
}

#[test]
fn hamilton_cycles_cross_clusters_as_matchings() {
    let spec = GeneratorSpec { n: 64, r: 4, count: 16, guest: GuestKind::HamiltonCycles, ..GeneratorSpec::default() };
    let inst = generate(&spec, 3).unwrap().extended.unwrap();
    for (h, parts) in inst.guests.iter().zip(&inst.guest_partitions) {
        for i in 1..=4 {
            for j in 1..=4 {
                // A matching: every vertex of X_i has at most one neighbour in X_j.
                for &x in &parts[i] {
                    assert!(parts[j].iter().filter(|&&y| h.has_edge(x, y)).count() <= 1);
                }
            }
            for &x in &parts[i] {
                let inside = h.neighbours(x).filter(|y| !parts[0].contains(y)).count();
                assert_eq!(inside, 2);
            }
        }
    }
}

#[test]
fn reported_epsilon_is_the_smallest_grid_value_that_validates() {
    let spec = GeneratorSpec { n: 64, r: 3, count: 4, ..GeneratorSpec::default() };
    let file = generate(&spec, 4).unwrap();
    let inst = file.extended.as_ref().unwrap();
    let eps = file.report.measured_eps;
    assert!(eps <= spec.eps);
    let at = |e: f64| validate_extended_instance(inst, e, spec.alpha, file.report.measured_density, Method::certificate()).unwrap().all_passed();
    assert!(at(eps));
    if eps > 0.02 + 1e-9 {
        assert!(!at(eps - 0.02));
    }
}

#[test]
fn generation_output_is_byte_stable() {
    let spec = GeneratorSpec { n: 48, count: 4, guest: GuestKind::BoundedDegreeTrees, ..GeneratorSpec::default() };
    let a = to_canonical_json(&generate(&spec, 5).unwrap()).unwrap();
    let b = to_canonical_json(&generate(&spec, 5).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn files_without_the_version_are_rejected() {
    let spec = GeneratorSpec { n: 32, count: 2, linked: Some(0), ..GeneratorSpec::default() };
    let file = generate(&spec, 6).unwrap();
    let bare = serde_json::to_string(&file).unwrap();
    assert!(matches!(from_json::<InstanceFile>(&bare), Err(Error::Format(_))));
    let newer = to_canonical_json(&file).unwrap().replacen("\"format\": 1", "\"format\": 2", 1);
    assert!(matches!(from_json::<InstanceFile>(&newer), Err(Error::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn instance_files_round_trip(seed in 0u64..1000, kind in 0usize..5) {
        let guest = [
            GuestKind::HamiltonCycles,
            GuestKind::PerfectMatchings,
            GuestKind::BoundedDegreeTrees,
            GuestKind::RRegularSmallComponents,
            GuestKind::RandomBoundedDegree,
        ][kind];
        let spec = GeneratorSpec { n: 32, count: 3, guest, eps: 0.5, ..GeneratorSpec::default() };
        let file = generate(&spec, seed).unwrap();
        let text = to_canonical_json(&file).unwrap();
        let back: InstanceFile = from_json(&text).unwrap();
        prop_assert_eq!(to_canonical_json(&back).unwrap(), text);
        prop_assert_eq!(back, file);
    }
}
