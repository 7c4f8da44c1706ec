use dsbridge::graph::*;
use dsbridge::qap::*;
use dsbridge::state_process::NoiseSchedule;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn process(d_v: usize, d_e: usize) -> GraphProcess<f64> {
    GraphProcess::new(
        GraphVocab::uniform(d_v, d_e).unwrap(),
        NoiseSchedule::single_step(0.3).unwrap(),
    )
}

#[test]
fn permuted_copies_are_recovered() {
    let p = process(5, 4);
    let cfg = QapSolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = rng.random_range(2..=12);
        let n_real = rng.random_range(1..=n);
        let g = random_sparse_graph(p.vocab(), n_real, n, &mut rng).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let h = g.relabel(&perm).unwrap();
        let cost = build_qap_cost(&p, &g, &h).unwrap();
        let truth = cost.objective(&Assignment::new(perm).unwrap().inverse().mapping);
        let sol = solve_qap(&cost, &cfg, k).unwrap();
        assert!(
            sol.nll - truth < 1e-2,
            "instance {k}: {} vs {truth}",
            sol.nll
        );
        worst = worst.max(sol.nll - truth);
    }
    assert!(worst < 1e-2);
}

#[test]
fn agrees_with_exhaustive_search() {
    let p = process(2, 2);
    let cfg = QapSolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut agree = 0;
    for k in 0..200 {
        let n = rng.random_range(2..=6);
        let g1 = random_graph(p.vocab(), rng.random_range(1..=n), n, 0.5, &mut rng).unwrap();
        let g2 = random_graph(p.vocab(), rng.random_range(1..=n), n, 0.5, &mut rng).unwrap();
        let cost = build_qap_cost(&p, &g1, &g2).unwrap();
        let sol = solve_qap(&cost, &cfg, k).unwrap();
        let (_, best) = exhaustive_qap(&cost).unwrap();
        assert!(sol.nll >= best - 1e-9);
        if sol.nll - best < 1e-9 {
            agree += 1;
        }
    }
    assert!(agree >= 190, "{agree}/200");
}

#[test]
fn single_node_graphs() {
    let p = process(3, 2);
    let g1 = LabeledGraph::empty(vec![1], 0);
    let g2 = LabeledGraph::empty(vec![2], 0);
    let cost = build_qap_cost(&p, &g1, &g2).unwrap();
    let sol = solve_qap(&cost, &QapSolverConfig::default(), 0).unwrap();
    assert_eq!(sol.assignment, Assignment::identity(1));
    let direct = pair_nll(&p, &g1, &g2, &Assignment::identity(1)).unwrap();
    assert!((sol.nll - direct).abs() < 1e-12);
}

#[test]
fn quadratic_form_matches_objective() {
    let p = process(3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..30 {
        let n = rng.random_range(1..=6);
        let g1 = random_graph(p.vocab(), rng.random_range(1..=n), n, 0.5, &mut rng).unwrap();
        let g2 = random_graph(p.vocab(), rng.random_range(1..=n), n, 0.5, &mut rng).unwrap();
        let cost = build_qap_cost(&p, &g1, &g2).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let a = Assignment::new(perm).unwrap();
        let quad = qap_objective(&cost, &assignment_matrix(&a)).unwrap();
        let obj = cost.objective(&a.mapping);
        let direct = pair_nll(&p, &g1, &g2, &a).unwrap();
        assert!((quad - obj).abs() < 1e-10 && (obj - direct).abs() < 1e-10);
    }
}

#[test]
fn trials_are_reproducible_and_sorted_by_trial() {
    let p = process(4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let g1 = random_sparse_graph(p.vocab(), 7, 8, &mut rng).unwrap();
    let g2 = random_sparse_graph(p.vocab(), 8, 8, &mut rng).unwrap();
    let cost = build_qap_cost(&p, &g1, &g2).unwrap();
    let cfg = QapSolverConfig::default();
    let a = solve_qap(&cost, &cfg, 9).unwrap();
    let b = solve_qap(&cost, &cfg, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.trials.iter().enumerate().all(|(i, t)| t.trial == i));
    let best = a.trials.iter().map(|t| t.nll).fold(f64::INFINITY, f64::min);
    assert_eq!(a.nll, best);
}

#[test]
fn single_precision_cost_finds_the_same_permutation() {
    let vocab = GraphVocab::<f32>::uniform(5, 4).unwrap();
    let p32 = GraphProcess::new(vocab, NoiseSchedule::single_step(0.3f32).unwrap());
    let p64 = process(5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let g = random_sparse_graph(p64.vocab(), 9, 10, &mut rng).unwrap();
    let mut perm: Vec<usize> = (0..10).collect();
    perm.shuffle(&mut rng);
    let h = g.relabel(&perm).unwrap();
    let c32: dsbridge::QapCost32 = build_qap_cost(&p32, &g, &h).unwrap();
    let sol = solve_qap(&c32, &QapSolverConfig::default(), 0).unwrap();
    let c64 = build_qap_cost(&p64, &g, &h).unwrap();
    let truth = c64.objective(&Assignment::new(perm).unwrap().inverse().mapping);
    assert!(c64.objective(&sol.assignment.mapping) - truth < 1e-2);
}

#[test]
fn ged_argmins_match_nll_argmins() {
    let p = process(3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for k in 0..100 {
        let g1 = random_graph(p.vocab(), rng.random_range(1..=5), 5, 0.5, &mut rng).unwrap();
        let g2 = random_graph(p.vocab(), rng.random_range(1..=5), 5, 0.5, &mut rng).unwrap();
        let report = verify_ged_nll_affinity(&p, &g1, &g2).unwrap();
        assert!(report.sets_equal && report.unit_sets_equal, "pair {k}");
        assert!(report.decomposition_residual < 1e-10);
        assert!(!report.nll_argmin.is_empty());
    }
}

#[test]
fn unequal_gaps_weight_the_edit_distance() {
    // d_V != d_E: the NLL argmin follows the gap-weighted distance
    let p = process(2, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    for _ in 0..30 {
        let g1 = random_graph(p.vocab(), 4, 4, 0.6, &mut rng).unwrap();
        let g2 = random_graph(p.vocab(), 4, 4, 0.6, &mut rng).unwrap();
        assert!(verify_ged_nll_affinity(&p, &g1, &g2).unwrap().sets_equal);
    }
}

#[test]
fn caps_are_enforced() {
    let p = process(2, 2);
    let g = LabeledGraph::empty(vec![1; EXHAUSTIVE_MAX_N + 1], 0);
    let cost = build_qap_cost(&p, &g, &g).unwrap();
    assert!(matches!(
        exhaustive_qap(&cost),
        Err(dsbridge::Error::CapExceeded { .. })
    ));
    let h = LabeledGraph::empty(vec![1; GED_MAX_N + 1], 0);
    assert!(verify_ged_nll_affinity(&p, &h, &h).is_err());
}
