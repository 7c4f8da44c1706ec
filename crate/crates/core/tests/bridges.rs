mod common;

use dsbridge::bridge::{bridge_marginal, pinned_kernel, pinned_rate, sample_bridge_paths};
use dsbridge::state_process::MarkovReference;

#[test]
fn pinned_kernels_compose() {
    let r = common::reference(4, 50, 0.99);
    for z in 0..4 {
        for (s, t, u) in [(0, 10, 50), (3, 20, 31), (10, 10, 40), (0, 25, 49)] {
            let direct = pinned_kernel(&r, s, u, z).unwrap().matrix;
            let composed = pinned_kernel(&r, s, t, z)
                .unwrap()
                .matrix
                .matmul(&pinned_kernel(&r, t, u, z).unwrap().matrix);
            assert!(direct.max_abs_diff(&composed) < 1e-12);
        }
    }
}

#[test]
fn endpoint_mixture_recovers_reference_kernel() {
    let r = common::reference(5, 40, 0.99);
    let (s, t) = (7, 23);
    let to_end = r.transition(s, 40).unwrap().matrix;
    let p = r.transition(s, t).unwrap().matrix;
    let pinned: Vec<_> = (0..5)
        .map(|z| pinned_kernel(&r, s, t, z).unwrap().matrix)
        .collect();
    for x in 0..5 {
        for y in 0..5 {
            let mix: f64 = (0..5).map(|z| to_end[(x, z)] * pinned[z][(x, y)]).sum();
            assert!((mix - p[(x, y)]).abs() < 1e-13);
        }
    }
}

#[test]
fn pinned_rows_are_stochastic_and_hit_the_endpoint() {
    let r = common::reference(3, 30, 0.99);
    for z in 0..3 {
        let to_end = pinned_kernel(&r, 0, 30, z).unwrap().matrix;
        for x in 0..3 {
            for y in 0..3 {
                let want = if y == z { 1.0 } else { 0.0 };
                assert!((to_end[(x, y)] - want).abs() < 1e-12);
            }
        }
        for k in 0..30 {
            pinned_rate(&r, k, z).unwrap().validate(1e-10).unwrap();
        }
        assert!(pinned_rate(&r, 30, z).is_err());
    }
}

#[test]
fn sampled_midpoint_matches_bridge_marginal() {
    let r = common::reference(4, 100, 0.99);
    let (x0, z, count) = (0, 3, 100_000);
    let paths = sample_bridge_paths(&r, x0, z, count, 11).unwrap();
    let exact = bridge_marginal(&r, x0, z, 50).unwrap();
    let mid = r.tau() / 2.0;
    let mut hist = [0usize; 4];
    for p in &paths {
        assert!(p.is_consistent(r.tau()));
        assert_eq!((p.start(), p.end()), (x0, z));
        hist[p.state_at(mid)] += 1;
    }
    for (y, &c) in hist.iter().enumerate() {
        let q = exact[y];
        let sigma = (q * (1.0 - q) / count as f64).sqrt();
        let freq = c as f64 / count as f64;
        assert!(
            (freq - q).abs() <= 3.0 * sigma + 1e-12,
            "state {y}: {freq} vs {q}"
        );
    }
}

#[test]
fn sampling_is_seed_deterministic() {
    let r = common::reference(3, 20, 0.99);
    let a = sample_bridge_paths(&r, 1, 2, 500, 5).unwrap();
    let b = sample_bridge_paths(&r, 1, 2, 500, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_bridge_paths(&r, 1, 2, 500, 6).unwrap());
}

#[test]
fn same_endpoints_with_vanishing_noise_stay_put() {
    use dsbridge::state_process::{NoiseSchedule, Prior, ReferenceProcess};
    let r = ReferenceProcess::new(
        NoiseSchedule::from_fn(10, 1.0, |t| 1.0 - 1e-9 * t).unwrap(),
        Prior::uniform(3).unwrap(),
    );
    for p in sample_bridge_paths(&r, 2, 2, 200, 0).unwrap() {
        assert_eq!(p.num_jumps(), 0);
    }
}
