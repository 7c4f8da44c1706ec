//! Path measures on the time grid and the two IMF projections.
//!
//! A Markov measure is an initial law plus one kernel per grid interval. A
//! reciprocal measure is an endpoint coupling `π(x0, z)` glued to reference
//! bridges; it never needs to be stored path-wise because every quantity we
//! need is a finite sum over `π` and reference kernels. With
//! `R(x0, z) = π(x0, z) / P_{0:τ}(x0, z)`:
//!
//! ```text
//! Λ(X_t = x, X_τ = z) = (P_{0:t}ᵀ R)(x, z) · P_{t:τ}(x, z)
//! Λ(X_0 = x0, X_t = x) = P_{0:t}(x0, x) · (R P_{t:τ}ᵀ)(x0, x)
//! ```

use crate::error::{Error, Result};
use crate::linalg::{total_variation, Matrix};
use crate::scalar::{xlogy_ratio, Scalar};
use crate::state_process::{MarkovReference, TransitionKernel};

/// Joint law of `(X_0, X_τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling<T> {
    matrix: Matrix<T>,
}

impl<T: Scalar> Coupling<T> {
    pub fn new(matrix: Matrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidParameter("coupling must be square".into()));
        }
        if let Some(v) = matrix
            .as_slice()
            .iter()
            .find(|&&v| !(v >= T::zero()) || !v.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "coupling entry {v} is negative or not finite"
            )));
        }
        let total = matrix.sum();
        if (total - T::one()).abs() > T::validation_tol() * T::lit(10.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling mass is {total}, expected 1"
            )));
        }
        Ok(Self { matrix })
    }

    /// Independent coupling `Γ ⊗ Ξ`.
    pub fn product(gamma: &[T], xi: &[T]) -> Result<Self> {
        validate_distribution(gamma, "gamma")?;
        validate_distribution(xi, "xi")?;
        if gamma.len() != xi.len() {
            return Err(Error::SizeMismatch {
                expected: gamma.len(),
                found: xi.len(),
            });
        }
        Self::new(Matrix::from_fn(gamma.len(), xi.len(), |i, j| {
            gamma[i] * xi[j]
        }))
    }

    /// Point mass at `(x, z)`.
    pub fn point(d: usize, x: usize, z: usize) -> Result<Self> {
        let mut m = Matrix::zeros(d, d);
        m[(x, z)] = T::one();
        Self::new(m)
    }

    pub fn d(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.matrix
    }

    /// Law of `X_0`.
    pub fn row_marginal(&self) -> Vec<T> {
        self.matrix.row_sums()
    }

    /// Law of `X_τ`.
    pub fn col_marginal(&self) -> Vec<T> {
        self.matrix.col_sums()
    }

    pub fn tv(&self, other: &Self) -> T {
        total_variation(self.matrix.as_slice(), other.matrix.as_slice())
    }

    /// Expected value of `f(x0, z)` under the coupling.
    pub fn expect(&self, f: impl Fn(usize, usize) -> T) -> T {
        let d = self.d();
        let mut acc = T::zero();
        for i in 0..d {
            for j in 0..d {
                let p = self.matrix[(i, j)];
                if p > T::zero() {
                    acc = acc + p * f(i, j);
                }
            }
        }
        acc
    }
}

/// Non-negative, finite entries summing to one.
pub fn validate_distribution<T: Scalar>(p: &[T], name: &str) -> Result<()> {
    if let Some(v) = p.iter().find(|&&v| !(v >= T::zero()) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name}: entry {v} is negative or not finite"
        )));
    }
    let total: T = p.iter().copied().sum();
    if (total - T::one()).abs() > T::validation_tol() * T::lit(10.0) {
        return Err(Error::InvalidParameter(format!(
            "{name}: sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Reference kernels reused across a projection: `P_{0:k}`, `P_{k:N}` and
/// `P_{k:k+1}` for every grid index.
#[derive(Debug, Clone)]
pub(crate) struct GridKernels<T> {
    pub from_start: Vec<Matrix<T>>,
    pub to_end: Vec<Matrix<T>>,
    pub step: Vec<Matrix<T>>,
}

impl<T: Scalar> GridKernels<T> {
    pub fn new<R: MarkovReference<T> + ?Sized>(reference: &R) -> Result<Self> {
        let n = reference.n_steps();
        let from_start = (0..=n)
            .map(|k| Ok(reference.transition(0, k)?.matrix))
            .collect::<Result<_>>()?;
        let to_end = (0..=n)
            .map(|k| Ok(reference.transition(k, n)?.matrix))
            .collect::<Result<_>>()?;
        let step = (0..n)
            .map(|k| Ok(reference.transition(k, k + 1)?.matrix))
            .collect::<Result<_>>()?;
        Ok(Self {
            from_start,
            to_end,
            step,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.step.len()
    }

    pub fn endpoint(&self) -> &Matrix<T> {
        &self.from_start[self.n_steps()]
    }
}

/// Mixture of reference bridges indexed by an endpoint coupling.
#[derive(Debug, Clone)]
pub struct ReciprocalMeasure<'a, T, R: ?Sized> {
    coupling: Coupling<T>,
    reference: &'a R,
    grid: GridKernels<T>,
    /// `π / P_{0:τ}` with `0/0 = 0`.
    ratio: Matrix<T>,
}

impl<'a, T: Scalar, R: MarkovReference<T> + ?Sized> ReciprocalMeasure<'a, T, R> {
    pub fn new(coupling: Coupling<T>, reference: &'a R) -> Result<Self> {
        let grid = GridKernels::new(reference)?;
        Self::with_grid(coupling, reference, grid)
    }

    pub(crate) fn with_grid(
        coupling: Coupling<T>,
        reference: &'a R,
        grid: GridKernels<T>,
    ) -> Result<Self> {
        let d = reference.num_states();
        if coupling.d() != d {
            return Err(Error::SizeMismatch {
                expected: d,
                found: coupling.d(),
            });
        }
        let p = grid.endpoint();
        let mut ratio = Matrix::zeros(d, d);
        for x0 in 0..d {
            for z in 0..d {
                let pi = coupling.matrix()[(x0, z)];
                if pi > T::zero() {
                    let q = p[(x0, z)];
                    if !(q > T::zero()) {
                        return Err(Error::SupportViolation(format!(
                            "coupling puts mass on ({x0}, {z}) but the reference cannot bridge it"
                        )));
                    }
                    ratio[(x0, z)] = pi / q;
                }
            }
        }
        Ok(Self {
            coupling,
            reference,
            grid,
            ratio,
        })
    }

    pub fn coupling(&self) -> &Coupling<T> {
        &self.coupling
    }

    pub fn reference(&self) -> &'a R {
        self.reference
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub(crate) fn grid(&self) -> &GridKernels<T> {
        &self.grid
    }

    pub(crate) fn ratio(&self) -> &Matrix<T> {
        &self.ratio
    }

    fn check_step(&self, k: usize) -> Result<()> {
        if k > self.n_steps() {
            return Err(Error::InvalidParameter(format!(
                "grid index {k} beyond {}",
                self.n_steps()
            )));
        }
        Ok(())
    }

    /// `(P_{0:k}ᵀ R)(x, z)`: the joint of `(X_k, X_τ)` divided by `P_{k:τ}`.
    pub(crate) fn terminal_weights(&self, k: usize) -> Matrix<T> {
        self.grid.from_start[k].transpose().matmul(&self.ratio)
    }

    /// `(R P_{k:τ}ᵀ)(x0, x)`: the joint of `(X_0, X_k)` divided by `P_{0:k}`.
    pub(crate) fn initial_weights(&self, k: usize) -> Matrix<T> {
        self.ratio.matmul(&self.grid.to_end[k].transpose())
    }

    /// Joint law of `(X_k, X_τ)`.
    pub fn reciprocal_joint(&self, k: usize) -> Result<Matrix<T>> {
        self.check_step(k)?;
        Ok(self.terminal_weights(k).hadamard(&self.grid.to_end[k]))
    }

    /// Joint law of `(X_0, X_k)`.
    pub fn initial_joint(&self, k: usize) -> Result<Matrix<T>> {
        self.check_step(k)?;
        Ok(self.grid.from_start[k].hadamard(&self.initial_weights(k)))
    }

    /// Law of `X_k`.
    pub fn marginal(&self, k: usize) -> Result<Vec<T>> {
        Ok(self.reciprocal_joint(k)?.row_sums())
    }

    pub fn marginals(&self) -> Vec<Vec<T>> {
        (0..=self.n_steps())
            .map(|k| self.reciprocal_joint(k).expect("in range").row_sums())
            .collect()
    }
}

/// Forward Markov measure on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChainMeasure<T> {
    pub init: Vec<T>,
    /// `kernels[k]` maps `X_k` to `X_{k+1}`.
    pub kernels: Vec<TransitionKernel<T>>,
}

impl<T: Scalar> MarkovChainMeasure<T> {
    pub fn new(init: Vec<T>, kernels: Vec<TransitionKernel<T>>) -> Result<Self> {
        validate_distribution(&init, "initial law")?;
        let tol = T::validation_tol() * T::lit(100.0);
        for (k, kernel) in kernels.iter().enumerate() {
            if kernel.matrix.rows() != init.len() {
                return Err(Error::SizeMismatch {
                    expected: init.len(),
                    found: kernel.matrix.rows(),
                });
            }
            if kernel.from != k || kernel.to != k + 1 {
                return Err(Error::InvalidParameter(format!(
                    "kernel {k} is not a single grid step"
                )));
            }
            kernel.validate(tol)?;
        }
        Ok(Self { init, kernels })
    }

    /// The reference process started from `init`.
    pub fn from_reference<R: MarkovReference<T> + ?Sized>(
        reference: &R,
        init: Vec<T>,
    ) -> Result<Self> {
        let kernels = (0..reference.n_steps())
            .map(|k| reference.transition(k, k + 1))
            .collect::<Result<Vec<_>>>()?;
        Self::new(init, kernels)
    }

    pub fn n_steps(&self) -> usize {
        self.kernels.len()
    }

    pub fn d(&self) -> usize {
        self.init.len()
    }

    /// Laws of `X_0, ..., X_N`.
    pub fn marginals(&self) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(self.n_steps() + 1);
        out.push(self.init.clone());
        for k in &self.kernels {
            let next = k.matrix.vecmul(out.last().expect("non-empty"));
            out.push(next);
        }
        out
    }

    /// Product of all step kernels, `P^M_{0:τ}`.
    pub fn endpoint_kernel(&self) -> Matrix<T> {
        self.kernels
            .iter()
            .fold(Matrix::identity(self.d()), |acc, k| acc.matmul(&k.matrix))
    }

    /// Joint law of `(X_0, X_τ)`.
    pub fn coupling(&self) -> Result<Coupling<T>> {
        let p = self.endpoint_kernel();
        let d = self.d();
        Coupling::new(Matrix::from_fn(d, d, |i, j| self.init[i] * p[(i, j)]))
    }
}

/// Markov measure described backwards in time: terminal law plus reversed
/// kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardChain<T> {
    pub terminal: Vec<T>,
    /// `kernels[k]` maps `X_{k+1}` (rows) to `X_k` (columns).
    pub kernels: Vec<TransitionKernel<T>>,
}

impl<T: Scalar> BackwardChain<T> {
    pub fn new(terminal: Vec<T>, kernels: Vec<TransitionKernel<T>>) -> Result<Self> {
        validate_distribution(&terminal, "terminal law")?;
        let tol = T::validation_tol() * T::lit(100.0);
        for (k, kernel) in kernels.iter().enumerate() {
            if kernel.matrix.rows() != terminal.len() {
                return Err(Error::SizeMismatch {
                    expected: terminal.len(),
                    found: kernel.matrix.rows(),
                });
            }
            if kernel.from != k + 1 || kernel.to != k {
                return Err(Error::InvalidParameter(format!(
                    "reversed kernel {k} is not a single grid step"
                )));
            }
            kernel.validate(tol)?;
        }
        Ok(Self { terminal, kernels })
    }

    pub fn n_steps(&self) -> usize {
        self.kernels.len()
    }

    pub fn d(&self) -> usize {
        self.terminal.len()
    }

    /// Laws of `X_0, ..., X_N`, propagated backwards from the terminal law.
    pub fn marginals(&self) -> Vec<Vec<T>> {
        let n = self.n_steps();
        let mut out = vec![Vec::new(); n + 1];
        out[n] = self.terminal.clone();
        for k in (0..n).rev() {
            out[k] = self.kernels[k].matrix.vecmul(&out[k + 1]);
        }
        out
    }

    /// Joint law of `(X_0, X_τ)`.
    pub fn coupling(&self) -> Result<Coupling<T>> {
        let back = self
            .kernels
            .iter()
            .rev()
            .fold(Matrix::identity(self.d()), |acc, k| acc.matmul(&k.matrix));
        let d = self.d();
        Coupling::new(Matrix::from_fn(d, d, |x0, z| {
            self.terminal[z] * back[(z, x0)]
        }))
    }

    /// The same measure unrolled forwards by Bayes reversal of each step.
    /// States without mass keep their position.
    pub fn to_forward(&self) -> Result<MarkovChainMeasure<T>> {
        let marginals = self.marginals();
        let d = self.d();
        let kernels = (0..self.n_steps())
            .map(|k| {
                let back = &self.kernels[k].matrix;
                let (mu_k, mu_next) = (&marginals[k], &marginals[k + 1]);
                let mut m = Matrix::zeros(d, d);
                for x in 0..d {
                    if mu_k[x] > T::zero() {
                        for y in 0..d {
                            m[(x, y)] = mu_next[y] * back[(y, x)] / mu_k[x];
                        }
                        normalize_row(m.row_mut(x));
                    } else {
                        m[(x, x)] = T::one();
                    }
                }
                TransitionKernel {
                    from: k,
                    to: k + 1,
                    matrix: m,
                }
            })
            .collect();
        MarkovChainMeasure::new(marginals[0].clone(), kernels)
    }
}

fn normalize_row<T: Scalar>(row: &mut [T]) {
    let s: T = row.iter().copied().sum();
    if s > T::zero() {
        for v in row.iter_mut() {
            *v = *v / s;
        }
    }
}

/// Markov projection: the Markov measure closest in reverse KL to `rec`.
///
/// Each step mixes the pinned reference kernels by the posterior of the
/// terminal state, `K_k(x, y) = Σ_z Λ(z | X_k = x) P_{k:k+1}(x, y; z)`,
/// so every time marginal of `rec` is reproduced. States the measure never
/// visits get the plain reference step.
pub fn markov_projection<T: Scalar, R: MarkovReference<T> + ?Sized>(
    rec: &ReciprocalMeasure<'_, T, R>,
) -> Result<MarkovChainMeasure<T>> {
    let grid = rec.grid();
    let n = grid.n_steps();
    let d = rec.coupling().d();
    let kernels = (0..n)
        .map(|k| {
            // terminal_weights(k)(x, z) / Λ_k(x) = posterior(z | x) / P_{k:τ}(x, z)
            let mut w = rec.terminal_weights(k);
            let marginal = w.hadamard(&grid.to_end[k]).row_sums();
            for x in 0..d {
                let row = w.row_mut(x);
                if marginal[x] > T::zero() {
                    row.iter_mut().for_each(|v| *v = *v / marginal[x]);
                } else {
                    row.iter_mut().for_each(|v| *v = T::zero());
                }
            }
            let mix = w.matmul(&grid.to_end[k + 1].transpose());
            let step = &grid.step[k];
            let mut m = step.hadamard(&mix);
            for x in 0..d {
                if marginal[x] > T::zero() {
                    normalize_row(m.row_mut(x));
                } else {
                    m.row_mut(x).copy_from_slice(step.row(x));
                }
            }
            Ok(TransitionKernel {
                from: k,
                to: k + 1,
                matrix: m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MarkovChainMeasure::new(rec.coupling().row_marginal(), kernels)
}

/// Markov projection built backwards in time.
///
/// `K̃_k(y, x) = Σ_{x0} Λ(X_0 = x0 | X_{k+1} = y) Q(X_k = x | X_{k+1} = y, X_0 = x0)`,
/// the reversal of the reference conditioned on its starting point. It
/// describes the same measure as [`markov_projection`].
pub fn markov_projection_reverse<T: Scalar, R: MarkovReference<T> + ?Sized>(
    rec: &ReciprocalMeasure<'_, T, R>,
) -> Result<BackwardChain<T>> {
    let grid = rec.grid();
    let n = grid.n_steps();
    let d = rec.coupling().d();
    let kernels = (0..n)
        .map(|k| {
            // initial_weights(k+1)(x0, y) / Λ_{k+1}(y) = posterior(x0 | y) / P_{0:k+1}(x0, y)
            let mut v = rec.initial_weights(k + 1);
            let marginal = grid.from_start[k + 1].hadamard(&v).col_sums();
            for x0 in 0..d {
                for y in 0..d {
                    v[(x0, y)] = if marginal[y] > T::zero() {
                        v[(x0, y)] / marginal[y]
                    } else {
                        T::zero()
                    };
                }
            }
            let mix = v.transpose().matmul(&grid.from_start[k]);
            let mut m = grid.step[k].transpose().hadamard(&mix);
            for y in 0..d {
                if marginal[y] > T::zero() {
                    normalize_row(m.row_mut(y));
                } else {
                    m.row_mut(y).iter_mut().for_each(|v| *v = T::zero());
                    m[(y, y)] = T::one();
                }
            }
            Ok(TransitionKernel {
                from: k + 1,
                to: k,
                matrix: m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BackwardChain::new(rec.coupling().col_marginal(), kernels)
}

/// Reciprocal projection: keep the endpoint coupling of `chain`, replace its
/// interior by reference bridges.
pub fn reciprocal_projection<'a, T: Scalar, R: MarkovReference<T> + ?Sized>(
    chain: &MarkovChainMeasure<T>,
    reference: &'a R,
) -> Result<ReciprocalMeasure<'a, T, R>> {
    ReciprocalMeasure::new(chain.coupling()?, reference)
}

/// `Σ p ln(p/q)` over vectors with `0 ln 0 = 0`.
pub fn kl_vectors<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    p.iter()
        .zip(q)
        .try_fold(T::zero(), |acc, (&a, &b)| {
            xlogy_ratio(a, b).map(|v| acc + v)
        })
        .ok_or(Error::InfiniteDivergence)
}

/// Static objective `KL(a ‖ b)` between couplings.
pub fn kl_couplings<T: Scalar>(a: &Coupling<T>, b: &Coupling<T>) -> Result<T> {
    kl_vectors(a.matrix().as_slice(), b.matrix().as_slice())
}

/// Path-space `KL(a ‖ b)` between Markov measures on the same grid:
/// initial KL plus the marginal-weighted per-step kernel KLs.
pub fn kl_markov_paths<T: Scalar>(
    a: &MarkovChainMeasure<T>,
    b: &MarkovChainMeasure<T>,
) -> Result<T> {
    if a.n_steps() != b.n_steps() {
        return Err(Error::SizeMismatch {
            expected: a.n_steps(),
            found: b.n_steps(),
        });
    }
    let mut total = kl_vectors(&a.init, &b.init)?;
    let marginals = a.marginals();
    for (k, (ka, kb)) in a.kernels.iter().zip(&b.kernels).enumerate() {
        for (x, &mass) in marginals[k].iter().enumerate() {
            if mass > T::zero() {
                total = total + mass * kl_vectors(ka.matrix.row(x), kb.matrix.row(x))?;
            }
        }
    }
    Ok(total)
}

/// Path-space `KL(Λ ‖ M)` for a reciprocal `Λ` and a Markov `M`.
///
/// Conditioned on `X_0 = x0` the reciprocal measure is Markov: an
/// h-transform of the reference with `h_k = P_{k:τ} R(x0, ·)`. The divergence
/// therefore splits into the initial term plus an average over `x0` of
/// Markov-to-Markov divergences.
pub fn kl_reciprocal_to_markov<T: Scalar, R: MarkovReference<T> + ?Sized>(
    rec: &ReciprocalMeasure<'_, T, R>,
    m: &MarkovChainMeasure<T>,
) -> Result<T> {
    let grid = rec.grid();
    let n = grid.n_steps();
    if m.n_steps() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: m.n_steps(),
        });
    }
    let d = rec.coupling().d();
    let gamma = rec.coupling().row_marginal();
    let mut total = kl_vectors(&gamma, &m.init)?;
    let ratio = rec.ratio();
    // h[k][x] for the current x0
    let mut h = vec![vec![T::zero(); d]; n + 1];
    for x0 in 0..d {
        if !(gamma[x0] > T::zero()) {
            continue;
        }
        for (k, hk) in h.iter_mut().enumerate() {
            let p = &grid.to_end[k];
            for (x, v) in hk.iter_mut().enumerate() {
                *v = (0..d).map(|z| p[(x, z)] * ratio[(x0, z)]).sum();
            }
        }
        let mut cond = vec![T::zero(); d];
        for k in 0..n {
            let step = &grid.step[k];
            let from_start = &grid.from_start[k];
            for x in 0..d {
                let mass = from_start[(x0, x)] * h[k][x];
                if !(mass > T::zero()) {
                    continue;
                }
                for y in 0..d {
                    cond[y] = step[(x, y)] * h[k + 1][y] / h[k][x];
                }
                total = total + mass * kl_vectors(&cond, m.kernels[k].matrix.row(x))?;
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_process::{NoiseSchedule, Prior, ReferenceProcess};
    use approx::assert_abs_diff_eq;

    fn reference(n: usize, d: usize) -> ReferenceProcess<f64> {
        ReferenceProcess::new(
            NoiseSchedule::symmetric_cosine(n, 0.95, 1.0, 0.008).unwrap(),
            Prior::uniform(d).unwrap(),
        )
    }

    #[test]
    fn coupling_validation() {
        assert!(
            Coupling::new(Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.4]]).unwrap()).is_err()
        );
        assert!(
            Coupling::new(Matrix::from_rows(&[vec![1.1, -0.1], vec![0.0, 0.0]]).unwrap()).is_err()
        );
        let c = Coupling::product(&[0.25, 0.75], &[0.5, 0.5]).unwrap();
        assert_eq!(c.row_marginal(), vec![0.25, 0.75]);
        assert_eq!(c.col_marginal(), vec![0.5, 0.5]);
    }

    #[test]
    fn kl_hand_value() {
        let a =
            Coupling::new(Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap()).unwrap();
        let b = Coupling::new(Matrix::from_rows(&[vec![0.25; 2], vec![0.25; 2]]).unwrap()).unwrap();
        assert_abs_diff_eq!(
            kl_couplings(&a, &b).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(kl_couplings(&a, &a).unwrap(), 0.0);
        assert!(matches!(
            kl_couplings(&b, &a),
            Err(Error::InfiniteDivergence)
        ));
    }

    #[test]
    fn reciprocal_joint_boundaries() {
        let r = reference(12, 3);
        let pi = Coupling::new(
            Matrix::from_rows(&[
                vec![0.1, 0.05, 0.05],
                vec![0.2, 0.1, 0.0],
                vec![0.0, 0.3, 0.2],
            ])
            .unwrap(),
        )
        .unwrap();
        let rec = ReciprocalMeasure::new(pi.clone(), &r).unwrap();
        let j0 = rec.reciprocal_joint(0).unwrap();
        assert!(j0.max_abs_diff(pi.matrix()) < 1e-15);
        let jn = rec.reciprocal_joint(12).unwrap();
        let xi = pi.col_marginal();
        for x in 0..3 {
            for z in 0..3 {
                let expect = if x == z { xi[z] } else { 0.0 };
                assert_abs_diff_eq!(jn[(x, z)], expect, epsilon = 1e-15);
            }
        }
        assert!(rec.reciprocal_joint(13).is_err());
    }

    #[test]
    fn support_violation_is_an_error() {
        let s = NoiseSchedule::from_alpha_bar(1.0, vec![1.0, 1.0]).unwrap();
        let r = ReferenceProcess::new(s, Prior::uniform(2).unwrap());
        let pi = Coupling::point(2, 0, 1).unwrap();
        assert!(matches!(
            ReciprocalMeasure::new(pi, &r),
            Err(Error::SupportViolation(_))
        ));
    }

    #[test]
    fn point_mass_projects_to_its_bridge() {
        let r = reference(10, 3);
        let rec = ReciprocalMeasure::new(Coupling::point(3, 1, 1).unwrap(), &r).unwrap();
        let m = markov_projection(&rec).unwrap();
        for (k, mu) in m.marginals().iter().enumerate() {
            let b = crate::bridge::bridge_marginal(&r, 1, 1, k).unwrap();
            for x in 0..3 {
                assert_abs_diff_eq!(mu[x], b[x], epsilon = 1e-14);
            }
        }
        assert_abs_diff_eq!(m.coupling().unwrap().matrix()[(1, 1)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn reference_coupling_is_a_fixed_point() {
        let r = ReferenceProcess::new(
            NoiseSchedule::symmetric_cosine(15, 0.9, 1.0, 0.008).unwrap(),
            Prior::new(vec![0.2, 0.5, 0.3]).unwrap(),
        );
        let init = vec![0.3, 0.3, 0.4];
        let chain = MarkovChainMeasure::from_reference(&r, init).unwrap();
        let rec = reciprocal_projection(&chain, &r).unwrap();
        let proj = markov_projection(&rec).unwrap();
        for (a, b) in proj.kernels.iter().zip(&chain.kernels) {
            assert!(a.matrix.max_abs_diff(&b.matrix) < 1e-12);
        }
    }

    #[test]
    fn delta_initial_backward_chain() {
        let r = reference(8, 3);
        let pi = Coupling::new(
            Matrix::from_rows(&[vec![0.0; 3], vec![0.2, 0.5, 0.3], vec![0.0; 3]]).unwrap(),
        )
        .unwrap();
        let rec = ReciprocalMeasure::new(pi, &r).unwrap();
        let back = markov_projection_reverse(&rec).unwrap();
        let mu0 = &back.marginals()[0];
        assert_abs_diff_eq!(mu0[1], 1.0, epsilon = 1e-14);
        // every reversed first step lands on x0 = 1 from visited states
        let first = &back.kernels[0].matrix;
        let mu1 = rec.marginal(1).unwrap();
        for y in 0..3 {
            if mu1[y] > 0.0 {
                assert_abs_diff_eq!(first[(y, 1)], 1.0, epsilon = 1e-14);
            }
        }
    }
}
