//! Reference bridges: the reference process conditioned on its terminal
//! state (Doob h-transform with `h_s(x) = P_{s:τ}(x, z)`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::state_process::{MarkovReference, RateMatrix};

/// `P_{s:t}(x, y; z) = P_{s:t}(x, y) P_{t:τ}(y, z) / P_{s:τ}(x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedKernel<T> {
    pub from: usize,
    pub to: usize,
    pub endpoint: usize,
    pub matrix: Matrix<T>,
}

/// h-function `P_{s:τ}(·, z)`; errors if it vanishes anywhere.
fn h_function<T: Scalar, R: MarkovReference<T> + ?Sized>(
    reference: &R,
    s: usize,
    z: usize,
) -> Result<Vec<T>> {
    let n = reference.n_steps();
    let p = reference.transition(s, n)?.matrix;
    let h: Vec<T> = (0..p.rows()).map(|x| p[(x, z)]).collect();
    if let Some(x) = h.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::DegenerateBridge { x, z, step: s });
    }
    Ok(h)
}

fn check_state(d: usize, z: usize) -> Result<()> {
    if z >= d {
        return Err(Error::InvalidParameter(format!(
            "state {z} out of range for d = {d}"
        )));
    }
    Ok(())
}

pub fn pinned_kernel<T: Scalar, R: MarkovReference<T> + ?Sized>(
    reference: &R,
    s: usize,
    t: usize,
    z: usize,
) -> Result<PinnedKernel<T>> {
    check_state(reference.num_states(), z)?;
    let p_st = reference.transition(s, t)?.matrix;
    let h_s = h_function(reference, s, z)?;
    let p_t_end = reference.transition(t, reference.n_steps())?.matrix;
    let d = p_st.rows();
    let matrix = Matrix::from_fn(d, d, |x, y| p_st[(x, y)] * p_t_end[(y, z)] / h_s[x]);
    Ok(PinnedKernel {
        from: s,
        to: t,
        endpoint: z,
        matrix,
    })
}

/// Generator of the bridge pinned at `z`:
/// `A(x, y; z) = A(x, y) h(y) / h(x)` off the diagonal, diagonal fixed by
/// zero row sums.
pub fn pinned_rate<T: Scalar, R: MarkovReference<T> + ?Sized>(
    reference: &R,
    s: usize,
    z: usize,
) -> Result<RateMatrix<T>> {
    check_state(reference.num_states(), z)?;
    let a = reference.rate(s)?.matrix;
    let h = h_function(reference, s, z)?;
    Ok(RateMatrix {
        at: s,
        matrix: h_transform_rates(&a, &h),
    })
}

/// `A(x, y) h(y) / h(x)` for `y ≠ x`, with the diagonal closing each row.
pub(crate) fn h_transform_rates<T: Scalar>(a: &Matrix<T>, h: &[T]) -> Matrix<T> {
    let d = a.rows();
    let mut out = Matrix::zeros(d, d);
    for x in 0..d {
        let mut off = T::zero();
        for y in 0..d {
            if y != x {
                let v = a[(x, y)] * h[y] / h[x];
                out[(x, y)] = v;
                off = off + v;
            }
        }
        out[(x, x)] = -off;
    }
    out
}

/// Law of `X_t` under the bridge from `x0` to `z`: `Q(X_t = · | X_0 = x0, X_τ = z)`.
pub fn bridge_marginal<T: Scalar, R: MarkovReference<T> + ?Sized>(
    reference: &R,
    x0: usize,
    z: usize,
    t: usize,
) -> Result<Vec<T>> {
    check_state(reference.num_states(), x0)?;
    Ok(pinned_kernel(reference, 0, t, z)?.matrix.row(x0).to_vec())
}

/// A piecewise-constant path recorded at grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath<T> {
    /// Jump instants, strictly increasing, in `(0, τ]`.
    pub times: Vec<T>,
    /// Visited states; `states.len() == times.len() + 1`.
    pub states: Vec<usize>,
}

impl<T: Scalar> JumpPath<T> {
    pub fn start(&self) -> usize {
        self.states[0]
    }

    pub fn end(&self) -> usize {
        *self.states.last().expect("non-empty path")
    }

    pub fn num_jumps(&self) -> usize {
        self.times.len()
    }

    /// State occupied at time `t` (right-continuous).
    pub fn state_at(&self, t: T) -> usize {
        let jumps = self.times.iter().take_while(|&&s| s <= t).count();
        self.states[jumps]
    }

    pub fn is_consistent(&self, tau: T) -> bool {
        self.states.len() == self.times.len() + 1
            && self.states.windows(2).all(|w| w[0] != w[1])
            && self.times.windows(2).all(|w| w[0] < w[1])
            && self.times.iter().all(|&t| t > T::zero() && t <= tau)
    }
}

/// Draws reference bridges ending at a fixed state, one categorical draw per
/// grid step.
#[derive(Debug, Clone)]
pub struct BridgeSampler<T> {
    endpoint: usize,
    dt: T,
    /// Cumulative rows of the one-step pinned kernels.
    cumulative: Vec<Matrix<T>>,
}

impl<T: Scalar> BridgeSampler<T> {
    pub fn new<R: MarkovReference<T> + ?Sized>(reference: &R, z: usize) -> Result<Self> {
        let n = reference.n_steps();
        let cumulative = (0..n)
            .map(|k| {
                let mut m = pinned_kernel(reference, k, k + 1, z)?.matrix;
                for x in 0..m.rows() {
                    let row = m.row_mut(x);
                    let mut acc = T::zero();
                    for v in row.iter_mut() {
                        acc = acc + *v;
                        *v = acc;
                    }
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            endpoint: z,
            dt: reference.dt(),
            cumulative,
        })
    }

    pub fn endpoint(&self) -> usize {
        self.endpoint
    }

    pub fn sample<G: Rng + ?Sized>(&self, x0: usize, rng: &mut G) -> JumpPath<T> {
        let mut times = Vec::new();
        let mut states = vec![x0];
        let mut x = x0;
        for (k, cum) in self.cumulative.iter().enumerate() {
            let row = cum.row(x);
            let total = row[row.len() - 1];
            let u = T::lit(rng.random::<f64>()) * total;
            let y = row
                .iter()
                .position(|&c| u < c)
                .unwrap_or_else(|| last_reachable(row));
            if y != x {
                times.push(self.dt * T::from_count(k + 1));
                states.push(y);
                x = y;
            }
        }
        JumpPath { times, states }
    }
}

fn last_reachable<T: Scalar>(cumulative_row: &[T]) -> usize {
    let total = cumulative_row[cumulative_row.len() - 1];
    cumulative_row
        .iter()
        .position(|&c| c >= total)
        .unwrap_or(cumulative_row.len() - 1)
}

/// Sample one bridge path from `x0` to `z`.
pub fn sample_bridge_path<T: Scalar, R: MarkovReference<T> + ?Sized, G: Rng + ?Sized>(
    reference: &R,
    x0: usize,
    z: usize,
    rng: &mut G,
) -> Result<JumpPath<T>> {
    check_state(reference.num_states(), x0)?;
    Ok(BridgeSampler::new(reference, z)?.sample(x0, rng))
}

/// Sample `count` independent bridges in parallel. Path `i` uses stream `i`
/// of a ChaCha generator seeded with `seed`, so the output does not depend on
/// the thread count.
pub fn sample_bridge_paths<T: Scalar, R: MarkovReference<T> + ?Sized>(
    reference: &R,
    x0: usize,
    z: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<JumpPath<T>>> {
    check_state(reference.num_states(), x0)?;
    let sampler = BridgeSampler::new(reference, z)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sampler.sample(x0, &mut rng)
        })
        .collect())
}
