#![allow(dead_code)]

use dsbridge::linalg::Matrix;
use dsbridge::measures::Coupling;
use dsbridge::state_process::{NoiseSchedule, Prior, ReferenceProcess, DEFAULT_S_OFFSET};
use rand::Rng;

pub fn reference(d: usize, n_steps: usize, alpha_min: f64) -> ReferenceProcess<f64> {
    ReferenceProcess::new(
        NoiseSchedule::symmetric_cosine(n_steps, alpha_min, 1.0, DEFAULT_S_OFFSET).unwrap(),
        Prior::uniform(d).unwrap(),
    )
}

pub fn random_dist<G: Rng>(rng: &mut G, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn random_coupling<G: Rng>(rng: &mut G, d: usize) -> Coupling<f64> {
    let m = Matrix::from_fn(d, d, |_, _| rng.random::<f64>() + 0.01);
    let s = m.sum();
    Coupling::new(m.map(|v| v / s)).unwrap()
}
