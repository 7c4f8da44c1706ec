//! Static Schrödinger bridge as entropic optimal transport.
//!
//! The static problem `min KL(π ‖ Q_{0,τ})` over couplings with marginals
//! `(Γ, Ξ)` is solved by Sinkhorn scaling of the reference endpoint law,
//! `π = diag(u) Q_{0,τ} diag(v)`; equivalently, entropic OT with cost
//! `c(x, y) = -ln P_{0:τ}(x, y)`. The initial law of the reference is taken
//! uniform: any positive choice is a rank-one factor absorbed by `u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::{validate_distribution, Coupling};
use crate::scalar::{log_sum_exp, Scalar};
use crate::state_process::MarkovReference;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Scalar")]
pub struct SinkhornConfig<T> {
    pub max_iters: usize,
    /// L1 tolerance on the marginal residual.
    pub tol_marginal: T,
    pub log_domain: bool,
}

impl<T: Scalar> Default for SinkhornConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol_marginal: T::lit(1e-10),
            log_domain: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution<T> {
    pub coupling: Coupling<T>,
    /// Row scaling `ln u` (`-inf` on rows without mass).
    pub log_u: Vec<T>,
    /// Column scaling `ln v`.
    pub log_v: Vec<T>,
    pub iterations: usize,
    /// L1 marginal residual at exit.
    pub marginal_error: T,
}

/// Reference endpoint law `Q_{0,τ}(x, y) = q0(x) P_{0:τ}(x, y)`.
pub fn reference_endpoint_coupling<T: Scalar, R: MarkovReference<T> + ?Sized>(
    reference: &R,
    q0: &[T],
) -> Result<Coupling<T>> {
    validate_distribution(q0, "initial law")?;
    let p = reference.transition(0, reference.n_steps())?.matrix;
    if q0.len() != p.rows() {
        return Err(Error::SizeMismatch {
            expected: p.rows(),
            found: q0.len(),
        });
    }
    Coupling::new(Matrix::from_fn(p.rows(), p.cols(), |x, y| {
        q0[x] * p[(x, y)]
    }))
}

/// Entropic OT cost `c(x, y) = -ln P_{0:τ}(x, y)`.
pub fn eot_cost_matrix<T: Scalar, R: MarkovReference<T> + ?Sized>(
    reference: &R,
) -> Result<Matrix<T>> {
    let p = reference.transition(0, reference.n_steps())?.matrix;
    Ok(p.map(|v| -v.ln()))
}

/// Solve the static bridge between `gamma` and `xi` under `reference`.
pub fn static_sb_sinkhorn<T: Scalar, R: MarkovReference<T> + ?Sized>(
    gamma: &[T],
    xi: &[T],
    reference: &R,
    cfg: &SinkhornConfig<T>,
) -> Result<SinkhornSolution<T>> {
    let d = reference.num_states();
    let uniform = vec![T::one() / T::from_count(d); d];
    let kernel = reference_endpoint_coupling(reference, &uniform)?.into_matrix();
    sinkhorn(gamma, xi, &kernel, cfg)
}

/// Sinkhorn scaling of an arbitrary non-negative kernel.
pub fn sinkhorn<T: Scalar>(
    gamma: &[T],
    xi: &[T],
    kernel: &Matrix<T>,
    cfg: &SinkhornConfig<T>,
) -> Result<SinkhornSolution<T>> {
    validate_distribution(gamma, "gamma")?;
    validate_distribution(xi, "xi")?;
    if gamma.len() != kernel.rows() {
        return Err(Error::SizeMismatch {
            expected: kernel.rows(),
            found: gamma.len(),
        });
    }
    if xi.len() != kernel.cols() {
        return Err(Error::SizeMismatch {
            expected: kernel.cols(),
            found: xi.len(),
        });
    }
    if !(cfg.tol_marginal > T::zero()) {
        return Err(Error::InvalidParameter("tol_marginal must be > 0".into()));
    }
    check_support(gamma, xi, kernel)?;
    let log_k = kernel.map(|v| {
        if v > T::zero() {
            v.ln()
        } else {
            T::neg_infinity()
        }
    });
    if cfg.log_domain {
        sinkhorn_log(gamma, xi, &log_k, cfg)
    } else {
        sinkhorn_linear(gamma, xi, kernel, &log_k, cfg)
    }
}

fn check_support<T: Scalar>(gamma: &[T], xi: &[T], kernel: &Matrix<T>) -> Result<()> {
    for (x, &g) in gamma.iter().enumerate() {
        if g > T::zero()
            && !kernel
                .row(x)
                .iter()
                .zip(xi)
                .any(|(&k, &v)| k > T::zero() && v > T::zero())
        {
            return Err(Error::SupportViolation(format!(
                "row {x} cannot reach the support of xi"
            )));
        }
    }
    for (y, &v) in xi.iter().enumerate() {
        if v > T::zero()
            && !(0..kernel.rows()).any(|x| kernel[(x, y)] > T::zero() && gamma[x] > T::zero())
        {
            return Err(Error::SupportViolation(format!(
                "column {y} unreachable from the support of gamma"
            )));
        }
    }
    Ok(())
}

fn ln_or_neg_inf<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v.ln()
    } else {
        T::neg_infinity()
    }
}

fn plan_from_potentials<T: Scalar>(log_k: &Matrix<T>, f: &[T], g: &[T]) -> Matrix<T> {
    Matrix::from_fn(log_k.rows(), log_k.cols(), |x, y| {
        let e = f[x] + log_k[(x, y)] + g[y];
        if e == T::neg_infinity() || e.is_nan() {
            T::zero()
        } else {
            e.exp()
        }
    })
}

fn marginal_residual<T: Scalar>(plan: &Matrix<T>, gamma: &[T], xi: &[T]) -> T {
    let r: T = plan
        .row_sums()
        .iter()
        .zip(gamma)
        .map(|(&a, &b)| (a - b).abs())
        .sum();
    let c: T = plan
        .col_sums()
        .iter()
        .zip(xi)
        .map(|(&a, &b)| (a - b).abs())
        .sum();
    r + c
}

fn finish<T: Scalar>(
    gamma: &[T],
    xi: &[T],
    log_k: &Matrix<T>,
    f: Vec<T>,
    g: Vec<T>,
    iterations: usize,
    cfg: &SinkhornConfig<T>,
) -> Result<SinkhornSolution<T>> {
    let plan = plan_from_potentials(log_k, &f, &g);
    let err = marginal_residual(&plan, gamma, xi);
    if !(err < cfg.tol_marginal) {
        return Err(Error::NonConvergence {
            iterations,
            residual: err.as_f64(),
        });
    }
    Ok(SinkhornSolution {
        coupling: Coupling::new(plan)?,
        log_u: f,
        log_v: g,
        iterations,
        marginal_error: err,
    })
}

fn sinkhorn_log<T: Scalar>(
    gamma: &[T],
    xi: &[T],
    log_k: &Matrix<T>,
    cfg: &SinkhornConfig<T>,
) -> Result<SinkhornSolution<T>> {
    let (n, m) = (log_k.rows(), log_k.cols());
    let log_gamma: Vec<T> = gamma.iter().map(|&v| ln_or_neg_inf(v)).collect();
    let log_xi: Vec<T> = xi.iter().map(|&v| ln_or_neg_inf(v)).collect();
    let mut f = vec![T::zero(); n];
    let mut g: Vec<T> = log_xi
        .iter()
        .map(|&v| if v.is_finite() { T::zero() } else { v })
        .collect();
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        for x in 0..n {
            f[x] = if log_gamma[x].is_finite() {
                log_gamma[x] - log_sum_exp((0..m).map(|y| log_k[(x, y)] + g[y]))
            } else {
                T::neg_infinity()
            };
        }
        for y in 0..m {
            g[y] = if log_xi[y].is_finite() {
                log_xi[y] - log_sum_exp((0..n).map(|x| log_k[(x, y)] + f[x]))
            } else {
                T::neg_infinity()
            };
        }
        // columns are exact after the g-update; check the rows
        let row_err: T = (0..n)
            .map(|x| {
                let row_mass = if f[x].is_finite() {
                    (f[x] + log_sum_exp((0..m).map(|y| log_k[(x, y)] + g[y]))).exp()
                } else {
                    T::zero()
                };
                (row_mass - gamma[x]).abs()
            })
            .sum();
        if row_err < cfg.tol_marginal * T::lit(0.5) {
            break;
        }
    }
    finish(gamma, xi, log_k, f, g, iterations, cfg)
}

fn sinkhorn_linear<T: Scalar>(
    gamma: &[T],
    xi: &[T],
    kernel: &Matrix<T>,
    log_k: &Matrix<T>,
    cfg: &SinkhornConfig<T>,
) -> Result<SinkhornSolution<T>> {
    let (n, m) = (kernel.rows(), kernel.cols());
    let mut u = vec![T::one(); n];
    let mut v = vec![T::one(); m];
    let kt = kernel.transpose();
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let kv: Vec<T> = (0..n)
            .map(|x| kernel.row(x).iter().zip(&v).map(|(&a, &b)| a * b).sum())
            .collect();
        for x in 0..n {
            u[x] = if gamma[x] > T::zero() {
                gamma[x] / kv[x]
            } else {
                T::zero()
            };
        }
        let ktu: Vec<T> = (0..m)
            .map(|y| kt.row(y).iter().zip(&u).map(|(&a, &b)| a * b).sum())
            .collect();
        for y in 0..m {
            v[y] = if xi[y] > T::zero() {
                xi[y] / ktu[y]
            } else {
                T::zero()
            };
        }
        let row_err: T = (0..n)
            .map(|x| {
                let mass: T = kernel
                    .row(x)
                    .iter()
                    .zip(&v)
                    .map(|(&a, &b)| a * b)
                    .sum::<T>()
                    * u[x];
                (mass - gamma[x]).abs()
            })
            .sum();
        if row_err < cfg.tol_marginal * T::lit(0.5) {
            break;
        }
    }
    let f = u.into_iter().map(ln_or_neg_inf).collect();
    let g = v.into_iter().map(ln_or_neg_inf).collect();
    finish(gamma, xi, log_k, f, g, iterations, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_process::{NoiseSchedule, Prior, ReferenceProcess};
    use approx::assert_abs_diff_eq;

    #[test]
    fn cost_matrix_hand_values() {
        let r = ReferenceProcess::new(
            NoiseSchedule::single_step(0.3).unwrap(),
            Prior::uniform(2).unwrap(),
        );
        let c = eot_cost_matrix(&r).unwrap();
        // -ln 0.65, -ln 0.35
        assert_abs_diff_eq!(c[(0, 0)], 0.430_782_916_092_454_2, epsilon = 1e-12);
        assert_abs_diff_eq!(c[(0, 1)], 1.049_822_124_498_677_6, epsilon = 1e-12);
        assert_abs_diff_eq!(c[(1, 1)], c[(0, 0)], epsilon = 0.0);
    }

    #[test]
    fn full_noise_cost_is_endpoint_independent() {
        let m: Vec<f64> = vec![0.1, 0.6, 0.3];
        let r = ReferenceProcess::new(
            NoiseSchedule::single_step(1e-300).unwrap(),
            Prior::new(m.clone()).unwrap(),
        );
        let c = eot_cost_matrix(&r).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_abs_diff_eq!(c[(x, y)], -m[y].ln(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn point_marginal_forces_rows() {
        let r = ReferenceProcess::new(
            NoiseSchedule::single_step(0.4).unwrap(),
            Prior::uniform(2).unwrap(),
        );
        let sol =
            static_sb_sinkhorn(&[1.0, 0.0], &[0.3, 0.7], &r, &SinkhornConfig::default()).unwrap();
        let pi = sol.coupling.matrix();
        assert_eq!(pi.row(1), &[0.0, 0.0]);
        assert_abs_diff_eq!(pi[(0, 0)], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[(0, 1)], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn linear_and_log_domain_agree() {
        let r = ReferenceProcess::new(
            NoiseSchedule::symmetric_cosine(20, 0.95, 1.0, 0.008).unwrap(),
            Prior::new(vec![0.2, 0.3, 0.5]).unwrap(),
        );
        let g = [0.5, 0.2, 0.3];
        let x = [0.1, 0.1, 0.8];
        let a = static_sb_sinkhorn(&g, &x, &r, &SinkhornConfig::default()).unwrap();
        let lin = SinkhornConfig {
            log_domain: false,
            ..SinkhornConfig::default()
        };
        let b = static_sb_sinkhorn(&g, &x, &r, &lin).unwrap();
        assert!(a.coupling.matrix().max_abs_diff(b.coupling.matrix()) < 1e-10);
        assert!(a.marginal_error < 1e-10);
    }

    #[test]
    fn non_convergence_reported() {
        let r = ReferenceProcess::new(
            NoiseSchedule::symmetric_cosine(20, 0.99, 1.0, 0.008).unwrap(),
            Prior::uniform(3).unwrap(),
        );
        let cfg = SinkhornConfig {
            max_iters: 1,
            ..SinkhornConfig::default()
        };
        let err = static_sb_sinkhorn(&[0.8, 0.1, 0.1], &[0.1, 0.1, 0.8], &r, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 1, .. }));
    }
}
