mod common;

use dsbridge::eot::{reference_endpoint_coupling, static_sb_sinkhorn, SinkhornConfig};
use dsbridge::linalg::{total_variation, Matrix};
use dsbridge::measures::*;
use dsbridge::state_process::{MarkovReference, TransitionKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every state sequence `x_0 .. x_n` over `d` states.
fn all_paths(d: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..=n {
        out = out
            .into_iter()
            .flat_map(|p| (0..d).map(move |x| [p.clone(), vec![x]].concat()))
            .collect();
    }
    out
}

fn reciprocal_path_prob<R: MarkovReference<f64>>(r: &R, pi: &Coupling<f64>, path: &[usize]) -> f64 {
    let n = path.len() - 1;
    let end = r.transition(0, n).unwrap().matrix;
    let steps: f64 = (0..n)
        .map(|k| r.transition(k, k + 1).unwrap().matrix[(path[k], path[k + 1])])
        .product();
    pi.matrix()[(path[0], path[n])] * steps / end[(path[0], path[n])]
}

fn chain_path_prob(m: &MarkovChainMeasure<f64>, path: &[usize]) -> f64 {
    m.init[path[0]]
        * m.kernels
            .iter()
            .enumerate()
            .map(|(k, ker)| ker.matrix[(path[k], path[k + 1])])
            .product::<f64>()
}

fn brute_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

#[test]
fn brute_force_path_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (d, n) = (3, 5);
    let r = common::reference(d, n, 0.9);
    let pi = common::random_coupling(&mut rng, d);
    let rec = ReciprocalMeasure::new(pi.clone(), &r).unwrap();
    let m = markov_projection(&rec).unwrap();
    let q = MarkovChainMeasure::from_reference(&r, common::random_dist(&mut rng, d)).unwrap();
    let paths = all_paths(d, n);
    let lam: Vec<f64> = paths
        .iter()
        .map(|p| reciprocal_path_prob(&r, &pi, p))
        .collect();
    let mp: Vec<f64> = paths.iter().map(|p| chain_path_prob(&m, p)).collect();
    let qp: Vec<f64> = paths.iter().map(|p| chain_path_prob(&q, p)).collect();
    assert!((lam.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    for k in 0..=n {
        let mut marg = vec![0.0; d];
        for (p, w) in paths.iter().zip(&lam) {
            marg[p[k]] += w;
        }
        assert!(total_variation(&marg, &rec.marginal(k).unwrap()) < 1e-13);
    }
    assert!((brute_kl(&lam, &qp) - kl_reciprocal_to_markov(&rec, &q).unwrap()).abs() < 1e-12);
    assert!((brute_kl(&lam, &mp) - kl_reciprocal_to_markov(&rec, &m).unwrap()).abs() < 1e-12);
    assert!((brute_kl(&mp, &qp) - kl_markov_paths(&m, &q).unwrap()).abs() < 1e-12);
}

#[test]
fn markov_projection_preserves_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for d in [2, 3, 5] {
        let r = common::reference(d, 50, 0.99);
        let pi = common::random_coupling(&mut rng, d);
        let rec = ReciprocalMeasure::new(pi, &r).unwrap();
        let fwd = markov_projection(&rec).unwrap().marginals();
        let bwd = markov_projection_reverse(&rec).unwrap().marginals();
        for (k, want) in rec.marginals().iter().enumerate() {
            assert!(total_variation(&fwd[k], want) < 1e-10);
            assert!(total_variation(&bwd[k], want) < 1e-10);
        }
    }
}

#[test]
fn pythagorean_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = common::reference(3, 50, 0.99);
    for _ in 0..10 {
        let pi = common::random_coupling(&mut rng, 3);
        let rec = ReciprocalMeasure::new(pi, &r).unwrap();
        let m = markov_projection(&rec).unwrap();
        let q = MarkovChainMeasure::from_reference(&r, common::random_dist(&mut rng, 3)).unwrap();
        let lhs = kl_reciprocal_to_markov(&rec, &q).unwrap();
        let rhs = kl_reciprocal_to_markov(&rec, &m).unwrap() + kl_markov_paths(&m, &q).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }
}

#[test]
fn forward_and_backward_projections_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let r = common::reference(4, 40, 0.99);
    let rec = ReciprocalMeasure::new(common::random_coupling(&mut rng, 4), &r).unwrap();
    let fwd = markov_projection(&rec).unwrap();
    let bwd = markov_projection_reverse(&rec).unwrap();
    assert!(fwd.coupling().unwrap().tv(&bwd.coupling().unwrap()) < 1e-12);
    let flipped = bwd.to_forward().unwrap();
    assert!(kl_markov_paths(&fwd, &flipped).unwrap().abs() < 1e-12);
}

#[test]
fn projection_beats_perturbed_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = common::reference(3, 20, 0.99);
    let rec = ReciprocalMeasure::new(common::random_coupling(&mut rng, 3), &r).unwrap();
    let m = markov_projection(&rec).unwrap();
    let best = kl_reciprocal_to_markov(&rec, &m).unwrap();
    for _ in 0..200 {
        let kernels: Vec<TransitionKernel<f64>> = m
            .kernels
            .iter()
            .map(|k| {
                let mut p = Matrix::from_fn(3, 3, |x, y| {
                    k.matrix[(x, y)] * (1.0 + 0.2 * rng.random::<f64>())
                });
                for x in 0..3 {
                    let s: f64 = p.row(x).iter().sum();
                    p.row_mut(x).iter_mut().for_each(|v| *v /= s);
                }
                TransitionKernel {
                    from: k.from,
                    to: k.to,
                    matrix: p,
                }
            })
            .collect();
        let other = MarkovChainMeasure::new(m.init.clone(), kernels).unwrap();
        assert!(kl_reciprocal_to_markov(&rec, &other).unwrap() >= best - 1e-12);
    }
}

#[test]
fn reciprocal_projection_keeps_the_endpoint_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r = common::reference(4, 30, 0.99);
    let chain = MarkovChainMeasure::from_reference(&r, common::random_dist(&mut rng, 4)).unwrap();
    let rec = reciprocal_projection(&chain, &r).unwrap();
    assert!(rec.coupling().tv(&chain.coupling().unwrap()) < 1e-15);
    // a reference chain is already reciprocal and Markov
    let back = markov_projection(&rec).unwrap();
    assert!(kl_markov_paths(&back, &chain).unwrap().abs() < 1e-12);
}

/// Move mass `eps` around the cycle (i, j) → (i, l) → (k, l) → (k, j).
fn cycle_perturb<G: Rng>(rng: &mut G, m: &Matrix<f64>) -> Matrix<f64> {
    let d = m.rows();
    let (i, k) = (rng.random_range(0..d), rng.random_range(0..d));
    let (j, l) = (rng.random_range(0..d), rng.random_range(0..d));
    let mut out = m.clone();
    if i == k || j == l {
        return out;
    }
    let room = m[(i, l)].min(m[(k, j)]);
    let eps = rng.random::<f64>() * room;
    out[(i, j)] += eps;
    out[(k, l)] += eps;
    out[(i, l)] -= eps;
    out[(k, j)] -= eps;
    out
}

#[test]
fn sinkhorn_beats_feasible_couplings() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let d = 5;
    let r = common::reference(d, 100, 0.99);
    let gamma = common::random_dist(&mut rng, d);
    let xi = common::random_dist(&mut rng, d);
    let sol = static_sb_sinkhorn(&gamma, &xi, &r, &SinkhornConfig::default()).unwrap();
    let q = reference_endpoint_coupling(&r, &vec![1.0 / d as f64; d]).unwrap();
    let best = kl_couplings(&sol.coupling, &q).unwrap();
    let mut current = Coupling::product(&gamma, &xi).unwrap().into_matrix();
    for _ in 0..1000 {
        current = cycle_perturb(&mut rng, &current);
        let c = Coupling::new(current.clone()).unwrap();
        let (row, col) = (c.row_marginal(), c.col_marginal());
        assert!(total_variation(&row, &gamma) < 1e-12 && total_variation(&col, &xi) < 1e-12);
        assert!(kl_couplings(&c, &q).unwrap() >= best - 1e-12);
    }
    // also from perturbations of the optimum itself
    for _ in 0..1000 {
        let c = Coupling::new(cycle_perturb(&mut rng, sol.coupling.matrix())).unwrap();
        assert!(kl_couplings(&c, &q).unwrap() >= best - 1e-12);
    }
}

#[test]
fn sinkhorn_linear_and_log_domains_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let r = common::reference(4, 100, 0.99);
    let gamma = common::random_dist(&mut rng, 4);
    let xi = common::random_dist(&mut rng, 4);
    let a = static_sb_sinkhorn(&gamma, &xi, &r, &SinkhornConfig::default()).unwrap();
    let b = static_sb_sinkhorn(
        &gamma,
        &xi,
        &r,
        &SinkhornConfig {
            log_domain: false,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(a.coupling.tv(&b.coupling) < 1e-10);
}
