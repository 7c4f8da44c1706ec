//! A tabular stand-in for the learned posterior over the far endpoint.
//!
//! A forward predictor holds, for every grid step `k` and state `x`, a
//! distribution `z_θ(k, x)` over the terminal state; its generator mixes the
//! pinned reference generators by `z_θ`, and its one-step kernel mixes the
//! exact one-step pinned kernels the same way. A backward predictor does the
//! same in reversed time with a distribution over the initial state given
//! `X_{k+1}`. The discretized projection losses are expectations over the
//! reciprocal joints and are summed exactly, so the exact posterior is the
//! minimizer and its loss is the irreducible floor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eot::{static_sb_sinkhorn, SinkhornConfig};
use crate::error::{Error, Result};
use crate::imf::Direction;
use crate::linalg::{total_variation, Matrix};
use crate::measures::{
    markov_projection, markov_projection_reverse, BackwardChain, Coupling, GridKernels,
    MarkovChainMeasure, ReciprocalMeasure,
};
use crate::scalar::{xlogy_ratio, Scalar};
use crate::state_process::{MarkovReference, TransitionKernel};

/// Logits are kept above this so every posterior weight stays positive.
pub const LOGIT_FLOOR: f64 = -700.0;
/// Consecutive loss increases that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularPredictor<T> {
    direction: Direction,
    n_steps: usize,
    d: usize,
    logits: Vec<T>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct Checkpoint<T> {
    direction: Direction,
    n_steps: usize,
    d: usize,
    /// `logits[k][state][endpoint]`.
    logits: Vec<Vec<Vec<T>>>,
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl<T: Scalar> TabularPredictor<T> {
    /// All-zero logits: uniform posteriors.
    pub fn uniform(direction: Direction, n_steps: usize, d: usize) -> Self {
        Self {
            direction,
            n_steps,
            d,
            logits: vec![T::zero(); n_steps * d * d],
        }
    }

    pub fn from_logits(
        direction: Direction,
        n_steps: usize,
        d: usize,
        logits: Vec<T>,
    ) -> Result<Self> {
        if logits.len() != n_steps * d * d {
            return Err(Error::SizeMismatch {
                expected: n_steps * d * d,
                found: logits.len(),
            });
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidParameter("logits must be finite".into()));
        }
        let mut p = Self {
            direction,
            n_steps,
            d,
            logits,
        };
        p.clamp();
        Ok(p)
    }

    /// Logits `ln p` from posterior tables `probs[k]` (rows: conditioning
    /// state, columns: endpoint).
    pub fn from_posteriors(direction: Direction, probs: &[Matrix<T>]) -> Result<Self> {
        let n = probs.len();
        let d = probs.first().map_or(0, Matrix::rows);
        let floor = T::lit(LOGIT_FLOOR);
        let mut logits = Vec::with_capacity(n * d * d);
        for p in probs {
            logits.extend(p.as_slice().iter().map(|&v| {
                if v > T::zero() {
                    v.ln().max(floor)
                } else {
                    floor
                }
            }));
        }
        Self::from_logits(direction, n, d, logits)
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [T] {
        &mut self.logits
    }

    fn slot(&self, k: usize, c: usize) -> std::ops::Range<usize> {
        let start = (k * self.d + c) * self.d;
        start..start + self.d
    }

    /// `z_θ(k, c)`: the predicted endpoint law given the conditioning state.
    pub fn probs(&self, k: usize, c: usize) -> Vec<T> {
        softmax(&self.logits[self.slot(k, c)])
    }

    fn clamp(&mut self) {
        let floor = T::lit(LOGIT_FLOOR);
        self.logits.iter_mut().for_each(|l| *l = l.max(floor));
    }

    pub fn to_json(&self) -> Result<String> {
        let logits = (0..self.n_steps)
            .map(|k| {
                (0..self.d)
                    .map(|c| self.logits[self.slot(k, c)].to_vec())
                    .collect()
            })
            .collect();
        let ck = Checkpoint {
            direction: self.direction,
            n_steps: self.n_steps,
            d: self.d,
            logits,
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint<T> = serde_json::from_str(text)?;
        let flat: Vec<T> = ck.logits.into_iter().flatten().flatten().collect();
        Self::from_logits(ck.direction, ck.n_steps, ck.d, flat)
    }
}

/// One-step conditional reference kernels, per grid step and conditioning
/// state: `pinned[k][c]` is a `d × d` matrix with rows indexed by the
/// endpoint and columns by the next state.
///
/// Forward: `c = X_k`, endpoint `z = X_τ`, next state `X_{k+1}`.
/// Backward: `c = X_{k+1}`, endpoint `x0 = X_0`, next state `X_k`.
#[derive(Debug, Clone)]
pub struct PinnedTables<T> {
    direction: Direction,
    d: usize,
    dt: T,
    grid: GridKernels<T>,
    pinned: Vec<Vec<Matrix<T>>>,
}

impl<T: Scalar> PinnedTables<T> {
    pub fn new<R: MarkovReference<T> + ?Sized>(
        reference: &R,
        direction: Direction,
    ) -> Result<Self> {
        let grid = GridKernels::new(reference)?;
        let n = grid.n_steps();
        let d = reference.num_states();
        let pinned = (0..n)
            .map(|k| {
                (0..d)
                    .map(|c| {
                        let mut b = Matrix::zeros(d, d);
                        for e in 0..d {
                            let (denom, step) = match direction {
                                Direction::Forward => (grid.to_end[k][(c, e)], k),
                                Direction::Backward => (grid.from_start[k + 1][(e, c)], k + 1),
                            };
                            if !(denom > T::zero()) {
                                return Err(Error::DegenerateBridge { x: c, z: e, step });
                            }
                            for o in 0..d {
                                b[(e, o)] = match direction {
                                    Direction::Forward => {
                                        grid.step[k][(c, o)] * grid.to_end[k + 1][(o, e)] / denom
                                    }
                                    Direction::Backward => {
                                        grid.from_start[k][(e, o)] * grid.step[k][(o, c)] / denom
                                    }
                                };
                            }
                        }
                        Ok(b)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            direction,
            d,
            dt: reference.dt(),
            grid,
            pinned,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn n_steps(&self) -> usize {
        self.pinned.len()
    }

    /// Loss weights `W_k(c, e)`: the reciprocal joint of the conditioning
    /// state and the endpoint.
    pub fn weights<R: MarkovReference<T> + ?Sized>(
        &self,
        rec: &ReciprocalMeasure<'_, T, R>,
    ) -> Result<Vec<Matrix<T>>> {
        if rec.coupling().d() != self.d || rec.n_steps() != self.n_steps() {
            return Err(Error::SizeMismatch {
                expected: self.d,
                found: rec.coupling().d(),
            });
        }
        (0..self.n_steps())
            .map(|k| match self.direction {
                Direction::Forward => rec.reciprocal_joint(k),
                Direction::Backward => Ok(rec.initial_joint(k + 1)?.transpose()),
            })
            .collect()
    }

    /// Exact posterior `W_k(c, ·) / Σ W_k(c, ·)`; rows without mass are uniform.
    pub fn exact_posterior(&self, weights: &[Matrix<T>]) -> Result<TabularPredictor<T>> {
        let d = self.d;
        let probs: Vec<Matrix<T>> = weights
            .iter()
            .map(|w| {
                let sums = w.row_sums();
                Matrix::from_fn(d, d, |c, e| {
                    if sums[c] > T::zero() {
                        w[(c, e)] / sums[c]
                    } else {
                        T::one() / T::from_count(d)
                    }
                })
            })
            .collect();
        TabularPredictor::from_posteriors(self.direction, &probs)
    }

    fn check(&self, pred: &TabularPredictor<T>) -> Result<()> {
        if pred.direction != self.direction {
            return Err(Error::InvalidParameter(
                "predictor and tables run in different directions".into(),
            ));
        }
        if pred.n_steps != self.n_steps() || pred.d != self.d {
            return Err(Error::SizeMismatch {
                expected: self.n_steps() * self.d,
                found: pred.n_steps * pred.d,
            });
        }
        Ok(())
    }

    fn mixed_row(&self, k: usize, c: usize, s: &[T]) -> Vec<T> {
        let b = &self.pinned[k][c];
        (0..self.d)
            .map(|o| (0..self.d).fold(T::zero(), |acc, e| acc + s[e] * b[(e, o)]))
            .collect()
    }

    /// Per-step kernels of the predictor. Forward kernels map `X_k` to
    /// `X_{k+1}`; backward kernels map `X_{k+1}` to `X_k`.
    pub fn predictor_kernels(
        &self,
        pred: &TabularPredictor<T>,
    ) -> Result<Vec<TransitionKernel<T>>> {
        self.check(pred)?;
        Ok((0..self.n_steps())
            .map(|k| {
                let rows: Vec<Vec<T>> = (0..self.d)
                    .map(|c| self.mixed_row(k, c, &pred.probs(k, c)))
                    .collect();
                let matrix = Matrix::from_rows(&rows).expect("square");
                match self.direction {
                    Direction::Forward => TransitionKernel {
                        from: k,
                        to: k + 1,
                        matrix,
                    },
                    Direction::Backward => TransitionKernel {
                        from: k + 1,
                        to: k,
                        matrix,
                    },
                }
            })
            .collect())
    }

    /// Loss of one `(k, c)` slice and, optionally, its logit gradient.
    fn slice(
        &self,
        k: usize,
        c: usize,
        w: &[T],
        logits: &[T],
        want_grad: bool,
    ) -> Result<(T, Option<Vec<T>>)> {
        let d = self.d;
        let total: T = w.iter().copied().sum();
        if !(total > T::zero()) {
            return Ok((T::zero(), want_grad.then(|| vec![T::zero(); d])));
        }
        let inv_dt = T::one() / self.dt;
        let s = softmax(logits);
        let b = &self.pinned[k][c];
        let q = self.mixed_row(k, c, &s);
        let mut loss = T::zero();
        for e in (0..d).filter(|&e| w[e] > T::zero()) {
            for o in 0..d {
                let term = xlogy_ratio(b[(e, o)], q[o]).ok_or(Error::InfiniteDivergence)?;
                loss = loss + w[e] * term;
            }
        }
        let grad = want_grad.then(|| {
            // dL/dq(o) = -T(o) / (Δ q(o)), T(o) = Σ_e w_e B[e][o]
            let dq: Vec<T> = (0..d)
                .map(|o| {
                    let t = (0..d).fold(T::zero(), |acc, e| acc + w[e] * b[(e, o)]);
                    if t > T::zero() {
                        -t / q[o] * inv_dt
                    } else {
                        T::zero()
                    }
                })
                .collect();
            let g: Vec<T> = (0..d)
                .map(|e| (0..d).fold(T::zero(), |acc, o| acc + b[(e, o)] * dq[o]))
                .collect();
            let mean = s
                .iter()
                .zip(&g)
                .fold(T::zero(), |acc, (&se, &ge)| acc + se * ge);
            s.iter()
                .zip(&g)
                .map(|(&se, &ge)| se * (ge - mean))
                .collect()
        });
        Ok((loss * inv_dt, grad))
    }

    /// Total loss and logit gradient for the given weights. Slices run in
    /// parallel and are summed in grid order.
    pub fn loss_and_grad(
        &self,
        pred: &TabularPredictor<T>,
        weights: &[Matrix<T>],
        want_grad: bool,
    ) -> Result<(T, Option<Vec<T>>)> {
        self.check(pred)?;
        let d = self.d;
        let parts = (0..self.n_steps())
            .into_par_iter()
            .map(|k| {
                let mut loss = T::zero();
                let mut grad = Vec::with_capacity(if want_grad { d * d } else { 0 });
                for c in 0..d {
                    let (l, g) = self.slice(
                        k,
                        c,
                        weights[k].row(c),
                        &pred.logits[pred.slot(k, c)],
                        want_grad,
                    )?;
                    loss = loss + l;
                    if let Some(g) = g {
                        grad.extend(g);
                    }
                }
                Ok((loss, grad))
            })
            .collect::<Result<Vec<_>>>()?;
        let loss = parts.iter().fold(T::zero(), |acc, (l, _)| acc + *l);
        let grad = want_grad.then(|| parts.into_iter().flat_map(|(_, g)| g).collect());
        Ok((loss, grad))
    }

    /// Largest entry-wise gap between the predictor's kernels and those of
    /// the exact Markov projection of `rec`, over rows the measure visits.
    pub fn kernel_error<R: MarkovReference<T> + ?Sized>(
        &self,
        pred: &TabularPredictor<T>,
        rec: &ReciprocalMeasure<'_, T, R>,
    ) -> Result<T> {
        let ours = self.predictor_kernels(pred)?;
        let (exact, marginals): (Vec<TransitionKernel<T>>, Vec<Vec<T>>) = match self.direction {
            Direction::Forward => {
                let m = markov_projection(rec)?;
                let mu = m.marginals();
                (m.kernels, mu[..self.n_steps()].to_vec())
            }
            Direction::Backward => {
                let b = markov_projection_reverse(rec)?;
                let mu = b.marginals();
                (b.kernels, mu[1..].to_vec())
            }
        };
        let mut err = T::zero();
        for ((a, b), mu) in ours.iter().zip(&exact).zip(&marginals) {
            for c in (0..self.d).filter(|&c| mu[c] > T::zero()) {
                for (x, y) in a.matrix.row(c).iter().zip(b.matrix.row(c)) {
                    err = err.max((*x - *y).abs());
                }
            }
        }
        Ok(err)
    }
}

/// Predictor generator row at grid step `k`.
///
/// Forward, conditioning on `X_k = x`:
/// `A(x, y) Σ_z z_θ(z) P_{k:τ}(y, z) / P_{k:τ}(x, z)`.
/// Backward, conditioning on `X_{k+1} = x`, in reversed time:
/// `A_{k+1}(y, x) Σ_{x0} z_θ(x0) P_{0:k+1}(x0, y) / P_{0:k+1}(x0, x)`.
/// The diagonal closes the row.
pub fn predictor_rate<T: Scalar, R: MarkovReference<T> + ?Sized>(
    pred: &TabularPredictor<T>,
    reference: &R,
    k: usize,
    x: usize,
) -> Result<Vec<T>> {
    let d = reference.num_states();
    if k >= pred.n_steps || x >= d || pred.d != d {
        return Err(Error::InvalidParameter(format!(
            "no predictor slot for step {k}, state {x}"
        )));
    }
    let n = reference.n_steps();
    let s = pred.probs(k, x);
    let (a, h) = match pred.direction {
        Direction::Forward => (
            reference.rate(k)?.matrix,
            reference.transition(k, n)?.matrix,
        ),
        Direction::Backward => (
            reference.rate(k + 1)?.matrix.transpose(),
            reference.transition(0, k + 1)?.matrix.transpose(),
        ),
    };
    // h(state, endpoint) in both directions after the transpose
    for (e, &se) in s.iter().enumerate() {
        if se > T::zero() && !(h[(x, e)] > T::zero()) {
            return Err(Error::Positivity(format!(
                "reference cannot connect state {x} with endpoint {e}"
            )));
        }
    }
    let mut row = vec![T::zero(); d];
    let mut off = T::zero();
    for y in (0..d).filter(|&y| y != x) {
        let ratio = (0..d).fold(T::zero(), |acc, e| {
            if s[e] > T::zero() {
                acc + s[e] * h[(y, e)] / h[(x, e)]
            } else {
                acc
            }
        });
        row[y] = a[(x, y)] * ratio;
        off = off + row[y];
    }
    row[x] = -off;
    Ok(row)
}

fn loss_for<T: Scalar, R: MarkovReference<T> + ?Sized>(
    pred: &TabularPredictor<T>,
    coupling: &Coupling<T>,
    reference: &R,
    direction: Direction,
) -> Result<T> {
    let tables = PinnedTables::new(reference, direction)?;
    let rec = ReciprocalMeasure::new(coupling.clone(), reference)?;
    let w = tables.weights(&rec)?;
    Ok(tables.loss_and_grad(pred, &w, false)?.0)
}

/// Discretized forward projection loss, summed exactly over `Λ_{k,τ}`.
pub fn forward_loss<T: Scalar, R: MarkovReference<T> + ?Sized>(
    pred: &TabularPredictor<T>,
    coupling: &Coupling<T>,
    reference: &R,
) -> Result<T> {
    loss_for(pred, coupling, reference, Direction::Forward)
}

/// Discretized backward projection loss, summed exactly over `Λ_{0,k+1}`.
pub fn backward_loss<T: Scalar, R: MarkovReference<T> + ?Sized>(
    pred: &TabularPredictor<T>,
    coupling: &Coupling<T>,
    reference: &R,
) -> Result<T> {
    loss_for(pred, coupling, reference, Direction::Backward)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Scalar")]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    /// Number of gradient steps.
    pub n_epochs: usize,
    /// Draw this many `(x0, xτ)` pairs per step instead of summing exactly.
    pub batch: Option<usize>,
    pub seed: u64,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: T,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::one(),
            n_epochs: 5000,
            batch: None,
            seed: 0,
            grad_tol: T::lit(1e-10),
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter("learning_rate must be > 0".into()));
        }
        if self.batch == Some(0) {
            return Err(Error::InvalidParameter("batch must be >= 1".into()));
        }
        if self.grad_tol < T::zero() {
            return Err(Error::InvalidParameter("grad_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord<T> {
    pub step: usize,
    pub loss: T,
    pub grad_norm: T,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub predictor: TabularPredictor<T>,
    pub curve: Vec<LossRecord<T>>,
    /// Gradient steps actually taken.
    pub steps: usize,
}

fn empirical_coupling<T: Scalar>(
    coupling: &Coupling<T>,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Coupling<T>> {
    let d = coupling.d();
    let w: Vec<f64> = coupling
        .matrix()
        .as_slice()
        .iter()
        .map(|v| v.as_f64().max(0.0))
        .collect();
    let dist =
        WeightedIndex::new(&w).map_err(|e| Error::InvalidParameter(format!("coupling: {e}")))?;
    let mut counts = vec![0usize; d * d];
    for _ in 0..batch {
        counts[dist.sample(rng)] += 1;
    }
    let m = Matrix::from_vec(
        d,
        d,
        counts
            .into_iter()
            .map(|c| T::from_count(c) / T::from_count(batch))
            .collect(),
    )
    .expect("d × d");
    Coupling::new(m)
}

/// Flags [`DIVERGENCE_WINDOW`] consecutive loss increases.
#[derive(Debug, Clone, Default)]
pub struct DivergenceMonitor<T> {
    last: Option<T>,
    increases: usize,
}

impl<T: Scalar> DivergenceMonitor<T> {
    /// Record a loss; `true` once the window of increases is reached.
    pub fn observe(&mut self, loss: T) -> bool {
        if let Some(prev) = self.last {
            self.increases = if loss > prev { self.increases + 1 } else { 0 };
        }
        self.last = Some(loss);
        !loss.is_finite() || self.increases >= DIVERGENCE_WINDOW
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

/// Plain gradient descent on the logits against a fixed reciprocal measure.
pub fn train_with_tables<T: Scalar, R: MarkovReference<T> + ?Sized>(
    mut pred: TabularPredictor<T>,
    tables: &PinnedTables<T>,
    rec: &ReciprocalMeasure<'_, T, R>,
    cfg: &TrainConfig<T>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    tables.check(&pred)?;
    let exact_weights = match cfg.batch {
        None => Some(tables.weights(rec)?),
        Some(_) => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.n_epochs + 1);
    let mut monitor = DivergenceMonitor {
        last: None,
        increases: 0,
    };
    let mut steps = 0;
    for step in 0..=cfg.n_epochs {
        let weights = match (&exact_weights, cfg.batch) {
            (Some(w), _) => w.clone(),
            (None, Some(b)) => {
                let emp = empirical_coupling(rec.coupling(), b, &mut rng)?;
                tables.weights(&ReciprocalMeasure::with_grid(
                    emp,
                    rec.reference(),
                    tables.grid.clone(),
                )?)?
            }
            (None, None) => unreachable!(),
        };
        let (loss, grad) = tables.loss_and_grad(&pred, &weights, true)?;
        let grad = grad.expect("requested");
        let grad_norm = norm(&grad);
        if monitor.observe(loss) || !grad_norm.is_finite() {
            return Err(Error::TrainingDiverged {
                step,
                window: DIVERGENCE_WINDOW,
            });
        }
        curve.push(LossRecord {
            step,
            loss,
            grad_norm,
        });
        if step == cfg.n_epochs || grad_norm < cfg.grad_tol {
            break;
        }
        for (l, g) in pred.logits.iter_mut().zip(&grad) {
            *l = *l - cfg.learning_rate * *g;
        }
        pred.clamp();
        steps += 1;
    }
    Ok(TrainOutcome {
        predictor: pred,
        curve,
        steps,
    })
}

/// Train `pred` on the reciprocal measure of `coupling`.
pub fn train<T: Scalar, R: MarkovReference<T> + ?Sized>(
    pred: TabularPredictor<T>,
    coupling: &Coupling<T>,
    reference: &R,
    cfg: &TrainConfig<T>,
) -> Result<TrainOutcome<T>> {
    let tables = PinnedTables::new(reference, pred.direction())?;
    let rec = ReciprocalMeasure::with_grid(coupling.clone(), reference, tables.grid.clone())?;
    train_with_tables(pred, &tables, &rec, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck<T> {
    pub max_rel_error: T,
    pub max_abs_error: T,
    pub coordinates: usize,
}

/// Denominator floor for the relative gradient error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compare the analytic gradient with central differences of step `h` on
/// the given logit coordinates. Only the `(k, state)` slice holding a
/// coordinate depends on it, so the difference is taken on that slice's
/// loss. Relative error uses `max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)`
/// as denominator.
pub fn gradient_check<T: Scalar>(
    pred: &TabularPredictor<T>,
    tables: &PinnedTables<T>,
    weights: &[Matrix<T>],
    coords: &[usize],
    h: T,
) -> Result<GradCheck<T>> {
    let (_, grad) = tables.loss_and_grad(pred, weights, true)?;
    let grad = grad.expect("requested");
    let d = pred.d;
    let mut max_rel = T::zero();
    let mut max_abs = T::zero();
    for &i in coords {
        if i >= pred.logits.len() {
            return Err(Error::InvalidParameter(format!(
                "coordinate {i} out of range"
            )));
        }
        let (k, c) = (i / (d * d), (i / d) % d);
        let slot = pred.slot(k, c);
        let eval = |delta: T| -> Result<T> {
            let mut logits = pred.logits[slot.clone()].to_vec();
            logits[i - slot.start] = logits[i - slot.start] + delta;
            Ok(tables.slice(k, c, weights[k].row(c), &logits, false)?.0)
        };
        let numeric = (eval(h)? - eval(-h)?) / (h + h);
        let abs = (numeric - grad[i]).abs();
        let denom = numeric
            .abs()
            .max(grad[i].abs())
            .max(T::lit(GRAD_CHECK_FLOOR));
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / denom);
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        coordinates: coords.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Scalar")]
pub struct ApproxImfConfig<T> {
    pub n_outer: usize,
    /// Alternate forward and backward fits; otherwise every fit is forward.
    pub alternate: bool,
    /// Start every fit from the exact posterior instead of warm-starting.
    pub init_from_exact: bool,
    pub train: TrainConfig<T>,
    pub sinkhorn: SinkhornConfig<T>,
}

impl<T: Scalar> Default for ApproxImfConfig<T> {
    fn default() -> Self {
        Self {
            n_outer: 6,
            alternate: true,
            init_from_exact: false,
            train: TrainConfig {
                n_epochs: 2000,
                ..TrainConfig::default()
            },
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterRecord<T> {
    pub outer: usize,
    pub direction: Direction,
    pub train_steps: usize,
    pub final_loss: T,
    pub tv_to_oracle: T,
    /// `TV(π_0, Γ)` of the coupling after this fit.
    pub initial_marginal_tv: T,
    /// `TV(π_τ, Ξ)` of the coupling after this fit.
    pub terminal_marginal_tv: T,
}

#[derive(Debug, Clone)]
pub struct ApproxImfOutcome<T> {
    pub coupling: Coupling<T>,
    pub oracle: Coupling<T>,
    pub records: Vec<OuterRecord<T>>,
    pub forward: Option<TabularPredictor<T>>,
    pub backward: Option<TabularPredictor<T>>,
}

/// IMF with each Markov projection replaced by a trained predictor. A
/// forward fit simulates from `Γ`, so the new coupling keeps `Γ` exactly;
/// a backward fit simulates back from `Ξ` and keeps `Ξ` exactly.
pub fn approximate_imf<T: Scalar, R: MarkovReference<T> + ?Sized>(
    gamma: &[T],
    xi: &[T],
    reference: &R,
    cfg: &ApproxImfConfig<T>,
) -> Result<ApproxImfOutcome<T>> {
    if cfg.n_outer < 1 {
        return Err(Error::InvalidParameter("n_outer must be >= 1".into()));
    }
    let d = reference.num_states();
    let oracle = static_sb_sinkhorn(gamma, xi, reference, &cfg.sinkhorn)?.coupling;
    let n = reference.n_steps();
    let fwd_tables = PinnedTables::new(reference, Direction::Forward)?;
    let bwd_tables = if cfg.alternate {
        Some(PinnedTables::new(reference, Direction::Backward)?)
    } else {
        None
    };
    let mut coupling = Coupling::product(gamma, xi)?;
    let mut forward: Option<TabularPredictor<T>> = None;
    let mut backward: Option<TabularPredictor<T>> = None;
    let mut records = Vec::with_capacity(cfg.n_outer);

    for outer in 1..=cfg.n_outer {
        let direction = Direction::for_iteration(outer, cfg.alternate);
        let (tables, slot) = match direction {
            Direction::Forward => (&fwd_tables, &mut forward),
            Direction::Backward => (bwd_tables.as_ref().expect("alternating"), &mut backward),
        };
        let rec = ReciprocalMeasure::with_grid(coupling.clone(), reference, tables.grid.clone())?;
        let start = if cfg.init_from_exact {
            tables.exact_posterior(&tables.weights(&rec)?)?
        } else {
            slot.take()
                .unwrap_or_else(|| TabularPredictor::uniform(direction, n, d))
        };
        let train_cfg = TrainConfig {
            seed: cfg.train.seed.wrapping_add(outer as u64),
            ..cfg.train
        };
        let out = train_with_tables(start, tables, &rec, &train_cfg)?;
        let kernels = tables.predictor_kernels(&out.predictor)?;
        coupling = match direction {
            Direction::Forward => MarkovChainMeasure::new(gamma.to_vec(), kernels)?.coupling()?,
            Direction::Backward => BackwardChain::new(xi.to_vec(), kernels)?.coupling()?,
        };
        records.push(OuterRecord {
            outer,
            direction,
            train_steps: out.steps,
            final_loss: out.curve.last().map_or(T::nan(), |r| r.loss),
            tv_to_oracle: coupling.tv(&oracle),
            initial_marginal_tv: total_variation(&coupling.row_marginal(), gamma),
            terminal_marginal_tv: total_variation(&coupling.col_marginal(), xi),
        });
        *slot = Some(out.predictor);
    }
    Ok(ApproxImfOutcome {
        coupling,
        oracle,
        records,
        forward,
        backward,
    })
}
