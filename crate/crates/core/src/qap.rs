//! Graph matching as a quadratic assignment problem.
//!
//! The pair NLL of two padded graphs under a node correspondence splits into
//! node terms and edge terms, so with a binary assignment vector `x` it is
//! the quadratic form `xᵀAx` where `A_{ia;ia}` holds node costs and
//! `A_{ia;jb} = c_E(e_ij, e'_ab) / 2` for `i ≠ j`, `a ≠ b`. The solver runs a
//! continuous relaxation (spectral or max-pooling power iteration) from
//! several perturbed starts and rounds each run with the Hungarian method.

use std::cmp::Ordering;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::graph::Assignment;
use crate::graph::{pair_nll_with_tables, GraphProcess, GraphVocab, LabeledGraph};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Largest slot count accepted by the exhaustive oracle.
pub const EXHAUSTIVE_MAX_N: usize = 8;
/// Largest slot count accepted by the GED argmin comparison.
pub const GED_MAX_N: usize = 6;

/// Matching cost between two padded graphs. `A` is kept factored: node cost
/// table plus an edge-label cost table indexed through both graphs' labels.
#[derive(Debug, Clone, PartialEq)]
pub struct QapCost<T> {
    n: usize,
    node_cost: Matrix<T>,
    edge_table: Matrix<T>,
    src_edges: Vec<usize>,
    tgt_edges: Vec<usize>,
    no_edge: usize,
    /// Real (non no-edge) neighbours of each target slot.
    tgt_neighbors: Vec<Vec<usize>>,
}

pub fn build_qap_cost<T: Scalar>(
    process: &GraphProcess<T>,
    g1: &LabeledGraph,
    g2: &LabeledGraph,
) -> Result<QapCost<T>> {
    if g1.n() != g2.n() {
        return Err(Error::SizeMismatch {
            expected: g1.n(),
            found: g2.n(),
        });
    }
    g1.validate_labels(process.vocab())?;
    g2.validate_labels(process.vocab())?;
    let (cv, ce) = process.nll_tables()?;
    QapCost::from_tables(&cv, ce, g1, g2, process.vocab().no_edge())
}

impl<T: Scalar> QapCost<T> {
    /// Cost from explicit `(c_V, c_E)` label-pair tables.
    pub fn from_tables(
        node_table: &Matrix<T>,
        edge_table: Matrix<T>,
        g1: &LabeledGraph,
        g2: &LabeledGraph,
        no_edge: usize,
    ) -> Result<Self> {
        if g1.n() != g2.n() {
            return Err(Error::SizeMismatch {
                expected: g1.n(),
                found: g2.n(),
            });
        }
        let n = g1.n();
        if node_table
            .as_slice()
            .iter()
            .chain(edge_table.as_slice())
            .any(|c| !c.is_finite() || *c < T::zero())
        {
            return Err(Error::InvalidParameter(
                "label costs must be finite and non-negative".into(),
            ));
        }
        let node_cost = Matrix::from_fn(n, n, |i, a| node_table[(g1.node(i), g2.node(a))]);
        let flat = |g: &LabeledGraph| (0..n * n).map(|k| g.edge(k / n, k % n)).collect::<Vec<_>>();
        let tgt_neighbors = (0..n)
            .map(|a| {
                (0..n)
                    .filter(|&b| b != a && g2.edge(a, b) != no_edge)
                    .collect()
            })
            .collect();
        Ok(Self {
            n,
            node_cost,
            edge_table,
            src_edges: flat(g1),
            tgt_edges: flat(g2),
            no_edge,
            tgt_neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node_cost(&self) -> &Matrix<T> {
        &self.node_cost
    }

    /// Label cost `c_E(e_ij, e'_ab)` of matching pair `(i, j)` to `(a, b)`.
    #[inline]
    pub fn pair_cost(&self, i: usize, j: usize, a: usize, b: usize) -> T {
        self.edge_table[(
            self.src_edges[i * self.n + j],
            self.tgt_edges[a * self.n + b],
        )]
    }

    /// `c_E(e_ij, e'_ab) − c_E(e_ij, none)`. Summed over target edges only, this
    /// differs from the full edge objective by a mapping-independent constant.
    #[inline]
    pub fn pair_excess(&self, i: usize, j: usize, a: usize, b: usize) -> T {
        self.pair_cost(i, j, a, b) - self.edge_table[(self.src_edges[i * self.n + j], self.no_edge)]
    }

    /// Entry `A_{ia;jb}` of the quadratic-form matrix.
    pub fn entry(&self, i: usize, a: usize, j: usize, b: usize) -> T {
        match (i == j, a == b) {
            (true, true) => self.node_cost[(i, a)],
            (false, false) => self.pair_cost(i, j, a, b) * T::lit(0.5),
            _ => T::zero(),
        }
    }

    pub fn target_neighbors(&self, a: usize) -> &[usize] {
        &self.tgt_neighbors[a]
    }

    /// Pair NLL of a mapping, summed over node slots and unordered pairs.
    pub fn objective(&self, mapping: &[usize]) -> T {
        let n = self.n;
        let nodes = (0..n).fold(T::zero(), |acc, i| acc + self.node_cost[(i, mapping[i])]);
        LabeledGraph::pairs(n).fold(nodes, |acc, (i, j)| {
            acc + self.pair_cost(i, j, mapping[i], mapping[j])
        })
    }
}

/// `xᵀAx` for a dense `n × n` assignment matrix `x` (`x[(i, a)]`).
pub fn qap_objective<T: Scalar>(cost: &QapCost<T>, x: &Matrix<T>) -> Result<T> {
    let n = cost.n();
    if x.rows() != n || x.cols() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: x.rows(),
        });
    }
    let mut total = T::zero();
    for i in 0..n {
        for a in 0..n {
            if x[(i, a)] == T::zero() {
                continue;
            }
            for j in 0..n {
                for b in 0..n {
                    total = total + x[(i, a)] * cost.entry(i, a, j, b) * x[(j, b)];
                }
            }
        }
    }
    Ok(total)
}

/// Binary assignment matrix of a mapping.
pub fn assignment_matrix<T: Scalar>(a: &Assignment) -> Matrix<T> {
    let n = a.len();
    Matrix::from_fn(n, n, |i, b| {
        if a.mapping[i] == b {
            T::one()
        } else {
            T::zero()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QapMethod {
    /// Spectral matching: sum over target neighbours.
    #[serde(rename = "SM")]
    Sm,
    /// Max-pooling matching: max over target neighbours.
    #[serde(rename = "MPM")]
    Mpm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Power-style ascent on `score = c_max - A`: `x ← (x + ε S⊙x) / ‖·‖₂`.
    Score,
    /// The literal cost update `x ← (x - ε A⊙x) / ‖·‖₂`.
    CostDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Scalar")]
pub struct QapSolverConfig<T> {
    pub method: QapMethod,
    pub mode: UpdateMode,
    /// Stop once the L2 change of the iterate drops below this.
    pub tolerance: T,
    pub max_iters: usize,
    pub noise_coeff: T,
    pub n_trials: usize,
    pub step_size: T,
}

impl<T: Scalar> Default for QapSolverConfig<T> {
    fn default() -> Self {
        Self {
            method: QapMethod::Mpm,
            mode: UpdateMode::Score,
            tolerance: T::lit(1e-4),
            max_iters: 2500,
            noise_coeff: T::lit(1e-6),
            n_trials: 10,
            step_size: T::one(),
        }
    }
}

impl<T: Scalar> QapSolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > T::zero()) {
            return Err(Error::InvalidParameter("tolerance must be > 0".into()));
        }
        if self.n_trials < 1 {
            return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.step_size > T::zero()) || self.noise_coeff < T::zero() {
            return Err(Error::InvalidParameter(
                "step_size must be > 0 and noise_coeff >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrialResult<T> {
    pub trial: usize,
    pub iterations: usize,
    pub converged: bool,
    pub nll: T,
    pub mapping: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QapSolution<T> {
    pub assignment: Assignment,
    pub nll: T,
    pub trials: Vec<TrialResult<T>>,
}

/// Per-trial relaxation tensors. `node[(i, a)]` and `edge[i][j][a][k]` for
/// `b = N(a)[k]` hold scores (score mode) or costs (descent mode).
struct Relaxation<T> {
    n: usize,
    node: Matrix<T>,
    edge: Vec<Vec<T>>,
    offsets: Vec<usize>,
}

impl<T: Scalar> Relaxation<T> {
    fn new(cost: &QapCost<T>, cfg: &QapSolverConfig<T>, rng: &mut ChaCha8Rng) -> Self {
        let n = cost.n();
        let mut offsets = vec![0];
        for a in 0..n {
            offsets.push(offsets[a] + cost.target_neighbors(a).len());
        }
        let half = T::lit(0.5);
        let edge_cost = |i, j, a, b| match cfg.mode {
            UpdateMode::Score => cost.pair_excess(i, j, a, b) * half,
            UpdateMode::CostDescent => cost.pair_cost(i, j, a, b) * half,
        };
        let c_max = match cfg.mode {
            UpdateMode::Score => {
                let t = &cost.edge_table;
                let mut e = T::zero();
                for r in 0..t.rows() {
                    for c in 0..t.cols() {
                        e = e.max((t[(r, c)] - t[(r, cost.no_edge)]) * half);
                    }
                }
                cost.node_cost.as_slice().iter().fold(e, |m, &c| m.max(c))
            }
            UpdateMode::CostDescent => T::zero(),
        };
        let sign = match cfg.mode {
            UpdateMode::Score => -T::one(),
            UpdateMode::CostDescent => T::one(),
        };
        let mut noise = || T::lit(StandardNormal.sample(rng)) * cfg.noise_coeff;
        let node = Matrix::from_fn(n, n, |i, a| c_max + sign * cost.node_cost[(i, a)] + noise());
        let mut edge = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut row = Vec::with_capacity(offsets[n]);
                for a in 0..n {
                    for &b in cost.target_neighbors(a) {
                        let v = if i == j {
                            T::zero()
                        } else {
                            c_max + sign * edge_cost(i, j, a, b)
                        };
                        row.push(v + noise());
                    }
                }
                edge.push(row);
            }
        }
        Self {
            n,
            node,
            edge,
            offsets,
        }
    }

    /// `(M x)_{ia}` with sum or max pooling over `b ∈ N(a)`.
    fn apply(&self, x: &Matrix<T>, method: QapMethod, tgt: &QapCost<T>) -> Matrix<T> {
        let n = self.n;
        Matrix::from_fn(n, n, |i, a| {
            let mut acc = self.node[(i, a)] * x[(i, a)];
            let nbrs = tgt.target_neighbors(a);
            if nbrs.is_empty() {
                return acc;
            }
            for j in (0..n).filter(|&j| j != i) {
                let row = &self.edge[i * n + j][self.offsets[a]..self.offsets[a + 1]];
                let terms = row.iter().zip(nbrs).map(|(&m, &b)| m * x[(j, b)]);
                acc = acc
                    + match method {
                        QapMethod::Sm => terms.fold(T::zero(), |s, v| s + v),
                        QapMethod::Mpm => terms.fold(T::neg_infinity(), T::max),
                    };
            }
            acc
        })
    }
}

fn l2<T: Scalar>(m: &Matrix<T>) -> T {
    m.as_slice()
        .iter()
        .fold(T::zero(), |s, &v| s + v * v)
        .sqrt()
}

fn run_trial<T: Scalar>(
    cost: &QapCost<T>,
    cfg: &QapSolverConfig<T>,
    seed: u64,
    trial: usize,
) -> Result<TrialResult<T>> {
    let n = cost.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let relax = Relaxation::new(cost, cfg, &mut rng);
    let mut x = Matrix::from_fn(n, n, |_, _| T::one() / T::from_count(n));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mx = relax.apply(&x, cfg.method, cost);
        let mut next = Matrix::from_fn(n, n, |i, a| match cfg.mode {
            UpdateMode::Score => x[(i, a)] + cfg.step_size * mx[(i, a)],
            UpdateMode::CostDescent => x[(i, a)] - cfg.step_size * mx[(i, a)],
        });
        let v = l2(&next);
        if !(v > T::zero()) || !v.is_finite() {
            break;
        }
        next = next.map(|e| e / v);
        let change = l2(&Matrix::from_fn(n, n, |i, a| next[(i, a)] - x[(i, a)]));
        x = next;
        if change < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let mapping = hungarian(&x.map(|v| -v))?;
    Ok(TrialResult {
        trial,
        iterations,
        converged,
        nll: cost.objective(&mapping),
        mapping,
    })
}

fn by_nll_then_mapping<T: Scalar>(a: &TrialResult<T>, b: &TrialResult<T>) -> Ordering {
    a.nll
        .partial_cmp(&b.nll)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.mapping.cmp(&b.mapping))
}

/// Best of `n_trials` perturbed relaxation runs. Trial `k` draws its noise
/// from stream `k` of a generator seeded with `seed`.
pub fn solve_qap<T: Scalar>(
    cost: &QapCost<T>,
    cfg: &QapSolverConfig<T>,
    seed: u64,
) -> Result<QapSolution<T>> {
    cfg.validate()?;
    if cost.n() == 0 {
        return Err(Error::InvalidParameter("empty graphs".into()));
    }
    let trials = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| run_trial(cost, cfg, seed, t))
        .collect::<Result<Vec<_>>>()?;
    let best = trials
        .iter()
        .min_by(|a, b| by_nll_then_mapping(a, b))
        .expect("n_trials >= 1");
    Ok(QapSolution {
        assignment: Assignment::new(best.mapping.clone())?,
        nll: best.nll,
        trials,
    })
}

/// Minimum-cost perfect matching on a square matrix (shortest augmenting
/// paths with potentials, `O(n³)`). Returns `row -> column`.
pub fn hungarian<T: Scalar>(cost: &Matrix<T>) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(Error::InvalidParameter(
            "Hungarian needs a square matrix".into(),
        ));
    }
    if cost.as_slice().iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter(
            "Hungarian needs finite costs".into(),
        ));
    }
    let n = cost.rows();
    // 1-based: column 0 is the virtual root.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![T::infinity(); n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = T::infinity();
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![0; n];
    for j in 1..=n {
        rows[p[j] - 1] = j - 1;
    }
    Ok(rows)
}

fn check_exhaustive(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::CapExceeded { size: n, cap });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("empty graphs".into()));
    }
    Ok(())
}

/// Global minimum over all `n!` assignments; the lexicographically smallest
/// minimizer wins ties.
pub fn exhaustive_qap<T: Scalar>(cost: &QapCost<T>) -> Result<(Assignment, T)> {
    check_exhaustive(cost.n(), EXHAUSTIVE_MAX_N)?;
    let mut best: Option<(Vec<usize>, T)> = None;
    for perm in (0..cost.n()).permutations(cost.n()) {
        let v = cost.objective(&perm);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((perm, v));
        }
    }
    let (m, v) = best.expect("at least one permutation");
    Ok((Assignment::new(m)?, v))
}

/// Every assignment whose value is within `rel_tol` (relative) of the
/// minimum of `f`, in lexicographic order.
pub fn argmin_set<T: Scalar>(n: usize, rel_tol: T, f: impl Fn(&[usize]) -> T) -> Vec<Assignment> {
    let values: Vec<(Vec<usize>, T)> = (0..n)
        .permutations(n)
        .map(|p| {
            let v = f(&p);
            (p, v)
        })
        .collect();
    let min = values.iter().fold(T::infinity(), |m, (_, v)| m.min(*v));
    let tol = rel_tol * min.abs().max(T::one());
    values
        .into_iter()
        .filter(|(_, v)| *v <= min + tol)
        .map(|(p, _)| Assignment { mapping: p })
        .collect()
}

/// Substitution cost tables for uniform priors and retention `alpha`:
/// `c(x, x) = -ln(((d-1)α + 1)/d)`, `c(x, y) = -ln((1 - α)/d)`.
pub fn ged_cost<T: Scalar>(vocab: &GraphVocab<T>, alpha: T) -> Result<(Matrix<T>, Matrix<T>)> {
    if !vocab.has_uniform_priors() {
        return Err(Error::NonUniformPrior);
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let table = |d: usize| {
        let df = T::from_count(d);
        let same = -(((df - T::one()) * alpha + T::one()) / df).ln();
        let diff = -((T::one() - alpha) / df).ln();
        Matrix::from_fn(d, d, |x, y| if x == y { same } else { diff })
    };
    Ok((table(vocab.d_v()), table(vocab.d_e())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GedReport<T> {
    /// Minimizers of the pair NLL.
    pub nll_argmin: Vec<Assignment>,
    /// Minimizers of the substitution-cost edit distance (node and edge
    /// mismatches weighted by their cost gaps).
    pub ged_argmin: Vec<Assignment>,
    /// Minimizers of the unit-cost mismatch count.
    pub mismatch_argmin: Vec<Assignment>,
    pub sets_equal: bool,
    pub unit_sets_equal: bool,
    /// Largest `|nll(σ) - (const + gap_V·mm_V(σ) + gap_E·mm_E(σ))|` over σ.
    pub decomposition_residual: T,
    pub min_nll: T,
    pub min_mismatch: usize,
}

fn mismatches(g1: &LabeledGraph, g2: &LabeledGraph, map: &[usize]) -> (usize, usize) {
    let nodes = (0..g1.n())
        .filter(|&i| g1.node(i) != g2.node(map[i]))
        .count();
    let edges = LabeledGraph::pairs(g1.n())
        .filter(|&(i, j)| g1.edge(i, j) != g2.edge(map[i], map[j]))
        .count();
    (nodes, edges)
}

/// Exhaustively compare minimizers of the pair NLL with those of the edit
/// distance under the matching substitution costs.
pub fn verify_ged_nll_affinity<T: Scalar>(
    process: &GraphProcess<T>,
    g1: &LabeledGraph,
    g2: &LabeledGraph,
) -> Result<GedReport<T>> {
    if g1.n() != g2.n() {
        return Err(Error::SizeMismatch {
            expected: g1.n(),
            found: g2.n(),
        });
    }
    check_exhaustive(g1.n(), GED_MAX_N)?;
    if !process.vocab().has_uniform_priors() {
        return Err(Error::NonUniformPrior);
    }
    let (cv, ce) = process.nll_tables()?;
    let n = g1.n();
    let pairs = T::from_count(n * (n - 1) / 2);
    let (id_v, sub_v) = (cv[(0, 0)], cv[(0, 1)]);
    let (id_e, sub_e) = (ce[(0, 0)], ce[(0, 1)]);
    let gap_v = sub_v - id_v;
    let gap_e = sub_e - id_e;
    let base = T::from_count(n) * id_v + pairs * id_e;
    let nll = |m: &[usize]| pair_nll_with_tables(&cv, &ce, g1, g2, m);
    let ged = |m: &[usize]| {
        let (mv, me) = mismatches(g1, g2, m);
        gap_v * T::from_count(mv) + gap_e * T::from_count(me)
    };
    let rel = T::lit(1e-9);
    let nll_argmin = argmin_set(n, rel, nll);
    let ged_argmin = argmin_set(n, rel, ged);
    let mismatch_argmin = argmin_set(n, rel, |m: &[usize]| {
        let (mv, me) = mismatches(g1, g2, m);
        T::from_count(mv + me)
    });
    let mut residual = T::zero();
    let mut min_nll = T::infinity();
    let mut min_mismatch = usize::MAX;
    for p in (0..n).permutations(n) {
        let v = nll(&p);
        residual = residual.max((v - base - ged(&p)).abs());
        min_nll = min_nll.min(v);
        let (mv, me) = mismatches(g1, g2, &p);
        min_mismatch = min_mismatch.min(mv + me);
    }
    Ok(GedReport {
        sets_equal: nll_argmin == ged_argmin,
        unit_sets_equal: nll_argmin == mismatch_argmin,
        nll_argmin,
        ged_argmin,
        mismatch_argmin,
        decomposition_residual: residual,
        min_nll,
        min_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_graph;
    use crate::state_process::NoiseSchedule;
    use approx::assert_abs_diff_eq;

    fn process(d_v: usize, d_e: usize, ratio: f64) -> GraphProcess<f64> {
        GraphProcess::new(
            GraphVocab::uniform(d_v, d_e).unwrap(),
            NoiseSchedule::single_step(ratio).unwrap(),
        )
    }

    #[test]
    fn node_costs_at_point_three() {
        let p = process(2, 2, 0.3);
        let g1 = LabeledGraph::empty(vec![1, 0], 0);
        let c = build_qap_cost(&p, &g1, &g1).unwrap();
        assert_abs_diff_eq!(
            c.node_cost()[(0, 0)],
            0.430_782_916_092_454_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            c.node_cost()[(0, 1)],
            1.049_822_124_498_677_6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hungarian_small() {
        let m = Matrix::from_rows(&[
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ])
        .unwrap();
        let a = hungarian(&m).unwrap();
        let total: f64 = a.iter().enumerate().map(|(i, &j)| m[(i, j)]).sum();
        assert_eq!(total, 5.0);
        assert!(Assignment::new(a).is_ok());
    }

    #[test]
    fn hungarian_matches_brute_force() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(1..7);
            let m = Matrix::from_fn(n, n, |_, _| rng.random::<f64>());
            let a = hungarian(&m).unwrap();
            let got: f64 = a.iter().enumerate().map(|(i, &j)| m[(i, j)]).sum();
            let best = (0..n)
                .permutations(n)
                .map(|p| p.iter().enumerate().map(|(i, &j)| m[(i, j)]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(got, best, epsilon = 1e-12);
        }
    }

    #[test]
    fn quadratic_form_equals_objective() {
        let p = process(3, 3, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g1 = random_graph(p.vocab(), 4, 5, 0.5, &mut rng).unwrap();
        let g2 = random_graph(p.vocab(), 5, 5, 0.5, &mut rng).unwrap();
        let c = build_qap_cost(&p, &g1, &g2).unwrap();
        for perm in (0..5).permutations(5) {
            let a = Assignment::new(perm).unwrap();
            let x = assignment_matrix(&a);
            let direct = crate::graph::pair_nll(&p, &g1, &g2, &a).unwrap();
            assert_abs_diff_eq!(qap_objective(&c, &x).unwrap(), direct, epsilon = 1e-10);
            assert_abs_diff_eq!(c.objective(&a.mapping), direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_node_is_trivial() {
        let p = process(2, 2, 0.3);
        let g = LabeledGraph::empty(vec![1], 0);
        let c = build_qap_cost(&p, &g, &g).unwrap();
        let s = solve_qap(&c, &QapSolverConfig::default(), 0).unwrap();
        assert_eq!(s.assignment.mapping, vec![0]);
        assert_abs_diff_eq!(s.nll, c.node_cost()[(0, 0)], epsilon = 0.0);
    }

    #[test]
    fn exhaustive_breaks_ties_lexicographically() {
        let p = process(2, 2, 0.3);
        let g = LabeledGraph::empty(vec![1, 1, 1], 0);
        let c = build_qap_cost(&p, &g, &g).unwrap();
        let (a, _) = exhaustive_qap(&c).unwrap();
        assert_eq!(a.mapping, vec![0, 1, 2]);
        let big = LabeledGraph::empty(vec![1; 9], 0);
        let c = build_qap_cost(&p, &big, &big).unwrap();
        assert!(matches!(exhaustive_qap(&c), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn ged_tables() {
        let v = GraphVocab::<f64>::uniform(2, 2).unwrap();
        let (cv, _) = ged_cost(&v, 0.3).unwrap();
        assert_abs_diff_eq!(cv[(0, 0)], -(0.65f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(cv[(0, 1)], -(0.35f64).ln(), epsilon = 1e-15);
        let skewed = GraphVocab::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            crate::state_process::Prior::new(vec![0.3, 0.7]).unwrap(),
            crate::state_process::Prior::uniform(2).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            ged_cost(&skewed, 0.3),
            Err(Error::NonUniformPrior)
        ));
        assert!(ged_cost(&v, 1.0).is_err());
    }

    #[test]
    fn ged_affinity_on_identical_graphs() {
        let p = process(3, 3, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_graph(p.vocab(), 4, 4, 0.5, &mut rng).unwrap();
        let r = verify_ged_nll_affinity(&p, &g, &g).unwrap();
        assert!(r.sets_equal && r.unit_sets_equal);
        assert!(r.nll_argmin.contains(&Assignment::identity(4)));
        assert_eq!(r.min_mismatch, 0);
        assert!(r.decomposition_residual < 1e-12);
    }
}
