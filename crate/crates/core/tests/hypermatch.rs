mod common;

use blowpack::hypermatch::{brute_force_best_matching, find_matching, max_codegree, max_degree, Hypergraph, MatchParams, TupleWeight};
use common::{calibration_hypergraph, calibration_weights, small_hypergraph};
use proptest::prelude::*;

#[test]
fn brute_force_takes_every_disjoint_edge() {
    let h = Hypergraph::new(3, 12, (0..4).map(|i| vec![3 * i, 3 * i + 1, 3 * i + 2])).unwrap();
    assert_eq!(brute_force_best_matching(&h, &TupleWeight::uniform(&h, 1.0)).unwrap(), vec![0, 1, 2, 3]);
}

#[test]
fn brute_force_on_a_three_uniform_path_alternates() {
    // Consecutive edges share one vertex: {0,1,2}, {2,3,4}, {4,5,6}, {6,7,8}.
    let h = Hypergraph::new(3, 9, (0..4).map(|i| vec![2 * i, 2 * i + 1, 2 * i + 2])).unwrap();
    let best = brute_force_best_matching(&h, &TupleWeight::uniform(&h, 1.0)).unwrap();
    assert_eq!(best, vec![0, 2]);
    assert!(h.is_matching(&best));
}

#[test]
fn matcher_reaches_ninety_percent_of_the_optimum_on_small_inputs() {
    for seed in 0..200 {
        let h = small_hypergraph(seed);
        let w = TupleWeight::uniform(&h, 1.0);
        let opt = brute_force_best_matching(&h, &w).unwrap().len();
        let got = find_matching(&h, &[w], &MatchParams::new(seed)).unwrap().matching.len();
        assert!(got as f64 >= 0.9 * opt as f64, "seed {seed}: {got} < 0.9 * {opt}");
    }
}

#[test]
fn calibration_ratios_stay_near_one() {
    let mut inside = 0;
    let mut total = 0;
    for seed in 0..20 {
        let h = calibration_hypergraph(seed, 900, 64);
        let delta = max_degree(&h);
        assert!(delta >= 64 && (max_codegree(&h) as f64) <= (delta as f64).sqrt());
        let ws = calibration_weights(&h, seed + 1000, 4);
        for w in &ws {
            assert!(w.total() >= (delta as f64).powf(1.1));
        }
        let rep = find_matching(&h, &ws, &MatchParams::new(seed)).unwrap();
        for row in &rep.weights {
            total += 1;
            inside += (0.8..=1.2).contains(&row.ratio) as usize;
        }
    }
    assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
}

#[test]
fn nibble_never_grows_the_live_vertex_set() {
    let h = calibration_hypergraph(3, 300, 20);
    let rep = find_matching(&h, &[], &MatchParams::new(3)).unwrap();
    assert!(rep.nibble_alive.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn empty_hypergraph_is_a_domain_error() {
    let h = Hypergraph::new(2, 4, Vec::<Vec<usize>>::new()).unwrap();
    assert!(find_matching(&h, &[], &MatchParams::new(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn output_is_a_maximal_matching(seed in any::<u64>()) {
        let h = small_hypergraph(seed);
        let rep = find_matching(&h, &[TupleWeight::uniform(&h, 1.0)], &MatchParams::new(seed)).unwrap();
        prop_assert!(h.is_matching(&rep.matching));
        for e in 0..h.edge_count() {
            let mut with = rep.matching.clone();
            if !with.contains(&e) {
                with.push(e);
                prop_assert!(!h.is_matching(&with), "edge {} could be added", e);
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_reports(seed in any::<u64>()) {
        let h = small_hypergraph(seed);
        let w = vec![TupleWeight::uniform(&h, 1.0)];
        prop_assert_eq!(find_matching(&h, &w, &MatchParams::new(seed)).unwrap(), find_matching(&h, &w, &MatchParams::new(seed)).unwrap());
    }
}
