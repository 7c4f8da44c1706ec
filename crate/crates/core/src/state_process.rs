//! Finite state spaces, noise schedules and the reference jump process.
//!
//! The reference process mixes towards a prior `m` at a rate set by the
//! cumulative retention `ᾱ(t)`:
//!
//! ```text
//! P_{s:t}(x, y) = r δ(x, y) + (1 - r) m(y),      r = ᾱ(t) / ᾱ(s)
//! A_t(x, y)     = ∂_t ln ᾱ(t) · (δ(x, y) - m(y))
//! ```
//!
//! Times are addressed by grid index `k ∈ 0..=n_steps`, `t_k = k τ / n_steps`.
//! Every kernel is evaluated in closed form; nothing is integrated.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Ordered, distinct category labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "state space needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidParameter(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels })
    }

    /// Labels `"0"`, `"1"`, ... for anonymous spaces.
    pub fn numbered(d: usize) -> Result<Self> {
        Self::new((0..d).map(|i| i.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Strictly positive probability vector: the stationary law of the
/// reference process.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior<T> {
    probs: Vec<T>,
}

impl<T: Scalar> Prior<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidParameter(
                "prior needs at least 2 entries".into(),
            ));
        }
        if let Some(p) = probs.iter().find(|p| !(**p > T::zero()) || !p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prior entries must be finite and > 0, found {p}"
            )));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::validation_tol() {
            return Err(Error::InvalidParameter(format!(
                "prior sums to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(
                "prior needs at least 2 entries".into(),
            ));
        }
        Ok(Self {
            probs: vec![T::one() / T::from_count(d); d],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    pub fn is_uniform(&self) -> bool {
        let u = T::one() / T::from_count(self.len());
        self.probs
            .iter()
            .all(|&p| (p - u).abs() <= T::validation_tol())
    }
}

/// Cumulative retention `ᾱ` on a uniform grid over `[0, τ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T> {
    tau: T,
    /// Per-step retention; `alpha[0]` is informational (the formula value at
    /// `t = 0`) and is not part of the cumulative product.
    alpha: Vec<T>,
    alpha_bar: Vec<T>,
}

pub const DEFAULT_S_OFFSET: f64 = 0.008;

impl<T: Scalar> NoiseSchedule<T> {
    /// Symmetric cosine schedule with floor `alpha_min`.
    ///
    /// The per-step retention follows a squared cosine that decays from ~1 at
    /// the ends of the horizon to `alpha_min` at its midpoint, mirrored about
    /// `τ/2`; `ᾱ(t_k) = Π_{1≤i≤k} α(t_i)`.
    pub fn symmetric_cosine(n_steps: usize, alpha_min: T, tau: T, s_offset: T) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_steps must be >= 2, got {n_steps}"
            )));
        }
        if !(alpha_min > T::zero() && alpha_min < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "alpha_min must lie in (0, 1), got {alpha_min}"
            )));
        }
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tau must be > 0, got {tau}"
            )));
        }
        if !(s_offset >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "s_offset must be >= 0, got {s_offset}"
            )));
        }
        let n = T::from_count(n_steps);
        let two = T::lit(2.0);
        let alpha: Vec<T> = (0..=n_steps)
            .map(|k| {
                // half-horizon coordinate in [0, 1]; integer mirror keeps the
                // schedule exactly symmetric
                let u = two * T::from_count(k.min(n_steps - k)) / n;
                let c = ((u + s_offset) / (T::one() + s_offset) * T::lit(FRAC_PI_2)).cos();
                c * c * (T::one() - alpha_min) + alpha_min
            })
            .collect();
        let mut alpha_bar = Vec::with_capacity(n_steps + 1);
        alpha_bar.push(T::one());
        for k in 1..=n_steps {
            alpha_bar.push(alpha_bar[k - 1] * alpha[k]);
        }
        Ok(Self {
            tau,
            alpha,
            alpha_bar,
        })
    }

    /// Schedule from explicit grid values `ᾱ(t_0), ..., ᾱ(t_N)`.
    pub fn from_alpha_bar(tau: T, alpha_bar: Vec<T>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::InvalidParameter(
                "schedule needs at least one step".into(),
            ));
        }
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tau must be > 0, got {tau}"
            )));
        }
        if (alpha_bar[0] - T::one()).abs() > T::validation_tol() {
            return Err(Error::InvalidParameter(format!(
                "alpha_bar(0) must be 1, got {}",
                alpha_bar[0]
            )));
        }
        for (k, w) in alpha_bar.windows(2).enumerate() {
            if !(w[1] > T::zero()) || !w[1].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "alpha_bar must be positive, got {} at step {}",
                    w[1],
                    k + 1
                )));
            }
            if w[1] > w[0] * (T::one() + T::validation_tol()) {
                return Err(Error::InvalidParameter(format!(
                    "alpha_bar increases at step {}",
                    k + 1
                )));
            }
        }
        let mut alpha = Vec::with_capacity(alpha_bar.len());
        alpha.push(T::one());
        alpha.extend(alpha_bar.windows(2).map(|w| w[1] / w[0]));
        Ok(Self {
            tau,
            alpha,
            alpha_bar,
        })
    }

    /// Sample a continuous schedule `t ↦ ᾱ(t)` on the grid (normalized so
    /// that `ᾱ(0) = 1`).
    pub fn from_fn(n_steps: usize, tau: T, f: impl Fn(T) -> T) -> Result<Self> {
        if n_steps < 1 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        let dt = tau / T::from_count(n_steps);
        let f0 = f(T::zero());
        let values = (0..=n_steps)
            .map(|k| f(dt * T::from_count(k)) / f0)
            .collect();
        Self::from_alpha_bar(tau, values)
    }

    /// One-step schedule with terminal retention `ratio = ᾱ(τ)/ᾱ(0)`.
    pub fn single_step(ratio: T) -> Result<Self> {
        Self::from_alpha_bar(T::one(), vec![T::one(), ratio])
    }

    pub fn n_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn dt(&self) -> T {
        self.tau / T::from_count(self.n_steps())
    }

    pub fn time(&self, k: usize) -> T {
        self.dt() * T::from_count(k)
    }

    /// Grid index of time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let dt = self.dt();
        let k = (t / dt).round();
        let tol = T::epsilon().sqrt() * self.tau;
        if k < T::zero() || k > T::from_count(self.n_steps()) || (k * dt - t).abs() > tol {
            return Err(Error::OffGrid(t.as_f64()));
        }
        Ok(k.to_usize().expect("grid index"))
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn alpha_bar(&self) -> &[T] {
        &self.alpha_bar
    }

    pub fn alpha_bar_at(&self, k: usize) -> T {
        self.alpha_bar[k]
    }

    pub fn terminal_alpha_bar(&self) -> T {
        self.alpha_bar[self.n_steps()]
    }

    /// Smallest per-step retention over the steps that enter `ᾱ`.
    pub fn min_alpha(&self) -> T {
        self.alpha[1..].iter().copied().fold(T::infinity(), T::min)
    }

    /// Retention ratio `ᾱ(t_t) / ᾱ(t_s)` for `s ≤ t`.
    pub fn retention(&self, s: usize, t: usize) -> Result<T> {
        self.check_order(s, t)?;
        Ok(self.alpha_bar[t] / self.alpha_bar[s])
    }

    /// `∂_t ln ᾱ` at grid index `k`: central difference in the interior,
    /// one-sided at the two ends.
    pub fn log_alpha_bar_slope(&self, k: usize) -> T {
        let n = self.n_steps();
        assert!(k <= n, "grid index out of range");
        let ln = |i: usize| self.alpha_bar[i].ln();
        let dt = self.dt();
        if k == 0 {
            (ln(1) - ln(0)) / dt
        } else if k == n {
            (ln(n) - ln(n - 1)) / dt
        } else {
            (ln(k + 1) - ln(k - 1)) / (T::lit(2.0) * dt)
        }
    }

    pub(crate) fn check_order(&self, s: usize, t: usize) -> Result<()> {
        if t > self.n_steps() {
            return Err(Error::InvalidParameter(format!(
                "grid index {t} beyond n_steps = {}",
                self.n_steps()
            )));
        }
        if s > t {
            return Err(Error::TimeOrder { s, t });
        }
        Ok(())
    }
}

/// Row-stochastic transition matrix between grid indices `from ≤ to`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel<T> {
    pub from: usize,
    pub to: usize,
    pub matrix: Matrix<T>,
}

impl<T: Scalar> TransitionKernel<T> {
    /// Checks entries in `[0, 1]` and unit row sums within `tol`.
    pub fn validate(&self, tol: T) -> Result<()> {
        if !self.matrix.is_square() {
            return Err(Error::InvalidParameter("kernel must be square".into()));
        }
        if let Some(v) = self
            .matrix
            .as_slice()
            .iter()
            .find(|&&v| !(v >= T::zero()) || v > T::one() + tol)
        {
            return Err(Error::InvalidParameter(format!(
                "kernel entry {v} outside [0, 1]"
            )));
        }
        let err = self.matrix.max_row_sum_error(T::one());
        if err > tol {
            return Err(Error::InvalidParameter(format!(
                "kernel row sum off by {err}"
            )));
        }
        Ok(())
    }

    pub fn compose(&self, next: &Self) -> Result<Self> {
        if self.to != next.from {
            return Err(Error::InvalidParameter(format!(
                "cannot compose kernels ending at {} and starting at {}",
                self.to, next.from
            )));
        }
        Ok(Self {
            from: self.from,
            to: next.to,
            matrix: self.matrix.matmul(&next.matrix),
        })
    }
}

/// Generator at grid index `at`: non-negative off-diagonal, zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix<T> {
    pub at: usize,
    pub matrix: Matrix<T>,
}

impl<T: Scalar> RateMatrix<T> {
    pub fn validate(&self, tol: T) -> Result<()> {
        let d = self.matrix.rows();
        for x in 0..d {
            for y in 0..d {
                let a = self.matrix[(x, y)];
                if !a.is_finite() || (x != y && a < -tol) {
                    return Err(Error::InvalidParameter(format!(
                        "invalid rate {a} at ({x}, {y})"
                    )));
                }
            }
        }
        let err = self.matrix.max_row_sum_error(T::zero());
        if err > tol {
            return Err(Error::InvalidParameter(format!(
                "rate row sum off by {err}"
            )));
        }
        Ok(())
    }

    /// First-order kernel `I + A Δ`.
    pub fn euler_step(&self, dt: T) -> Matrix<T> {
        let d = self.matrix.rows();
        Matrix::from_fn(d, d, |x, y| {
            let id = if x == y { T::one() } else { T::zero() };
            id + self.matrix[(x, y)] * dt
        })
    }
}

/// A Markov reference measure on a finite space, sampled on a time grid.
///
/// Everything downstream (bridges, projections, the IMF loop, the
/// entropic-OT oracle, the tabular learner) only needs kernels and rates, so
/// both the single-component process and the flattened graph process plug in
/// here.
pub trait MarkovReference<T: Scalar>: Sync {
    fn num_states(&self) -> usize;

    fn n_steps(&self) -> usize;

    fn tau(&self) -> T;

    /// `P_{s:t}` between grid indices.
    fn transition(&self, s: usize, t: usize) -> Result<TransitionKernel<T>>;

    /// Generator `A_t` at a grid index.
    fn rate(&self, t: usize) -> Result<RateMatrix<T>>;

    fn dt(&self) -> T {
        self.tau() / T::from_count(self.n_steps())
    }
}

/// The reference process of a single categorical variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProcess<T> {
    schedule: NoiseSchedule<T>,
    prior: Prior<T>,
}

impl<T: Scalar> ReferenceProcess<T> {
    pub fn new(schedule: NoiseSchedule<T>, prior: Prior<T>) -> Self {
        Self { schedule, prior }
    }

    pub fn schedule(&self) -> &NoiseSchedule<T> {
        &self.schedule
    }

    pub fn prior(&self) -> &Prior<T> {
        &self.prior
    }

    /// Closed-form `P_{s:t}(x, y)` given the retention ratio.
    #[inline]
    pub fn kernel_entry_from_ratio(&self, ratio: T, x: usize, y: usize) -> T {
        let stay = if x == y { ratio } else { T::zero() };
        stay + (T::one() - ratio) * self.prior.as_slice()[y]
    }

    pub fn kernel_entry(&self, s: usize, t: usize, x: usize, y: usize) -> Result<T> {
        let r = self.schedule.retention(s, t)?;
        Ok(self.kernel_entry_from_ratio(r, x, y))
    }

    /// `P_{s:t}` for an arbitrary retention ratio (not tied to the grid).
    pub fn kernel_for_ratio(&self, ratio: T) -> Matrix<T> {
        let d = self.prior.len();
        Matrix::from_fn(d, d, |x, y| self.kernel_entry_from_ratio(ratio, x, y))
    }
}

impl<T: Scalar> MarkovReference<T> for ReferenceProcess<T> {
    fn num_states(&self) -> usize {
        self.prior.len()
    }

    fn n_steps(&self) -> usize {
        self.schedule.n_steps()
    }

    fn tau(&self) -> T {
        self.schedule.tau()
    }

    fn transition(&self, s: usize, t: usize) -> Result<TransitionKernel<T>> {
        let r = self.schedule.retention(s, t)?;
        Ok(TransitionKernel {
            from: s,
            to: t,
            matrix: self.kernel_for_ratio(r),
        })
    }

    fn rate(&self, t: usize) -> Result<RateMatrix<T>> {
        self.schedule.check_order(0, t)?;
        let slope = self.schedule.log_alpha_bar_slope(t);
        let m = self.prior.as_slice();
        let d = m.len();
        let matrix = Matrix::from_fn(d, d, |x, y| {
            if x == y {
                slope * (T::one() - m[y])
            } else {
                -slope * m[y]
            }
        });
        Ok(RateMatrix { at: t, matrix })
    }
}
