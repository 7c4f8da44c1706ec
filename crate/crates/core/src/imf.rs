//! Iterative Markovian fitting.
//!
//! Starting from a coupling with the prescribed marginals, each iteration
//! glues reference bridges onto the current coupling (reciprocal projection),
//! takes the Markov projection of the result, and reads off the new endpoint
//! coupling. The Markov projection alternates between its forward and
//! time-reversed constructions when `alternate_direction` is set. The fixed
//! point is the static Schrödinger bridge, which the Sinkhorn oracle computes
//! independently.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eot::{static_sb_sinkhorn, SinkhornConfig};
use crate::error::{Error, Result};
use crate::linalg::total_variation;
use crate::measures::{
    kl_couplings, kl_markov_paths, markov_projection, markov_projection_reverse,
    validate_distribution, Coupling, GridKernels, MarkovChainMeasure, ReciprocalMeasure,
};
use crate::scalar::Scalar;
use crate::state_process::MarkovReference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    /// Direction of 1-based iteration `it`: forward on odd iterations,
    /// backward on even ones when alternating.
    pub fn for_iteration(it: usize, alternate: bool) -> Self {
        if alternate && it.is_multiple_of(2) {
            Direction::Backward
        } else {
            Direction::Forward
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Scalar")]
pub struct ImfConfig<T> {
    pub max_iters: usize,
    /// Stop once the TV distance between successive couplings drops below this.
    pub tol_coupling_tv: T,
    pub alternate_direction: bool,
    /// Solve the Sinkhorn oracle up front and log `KL(π_n ‖ π_SB)`.
    pub log_kl_to_oracle: bool,
    pub sinkhorn: SinkhornConfig<T>,
}

impl<T: Scalar> Default for ImfConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol_coupling_tv: T::lit(1e-12),
            alternate_direction: true,
            log_kl_to_oracle: true,
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub direction: Direction,
    pub tv_change: T,
    pub kl_to_oracle: Option<T>,
    /// `KL(M_n ‖ M_SB)` on paths, the bridge being the Markov projection of
    /// the oracle's reciprocal measure.
    pub path_kl_to_oracle: Option<T>,
    /// `KL(M_n ‖ M_{n-1})` between successive Markov iterates.
    pub path_kl: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImfTrace<T> {
    pub n_steps: usize,
    pub records: Vec<IterationRecord<T>>,
}

#[derive(Debug, Clone)]
pub struct ImfOutcome<T> {
    pub coupling: Coupling<T>,
    pub markov: MarkovChainMeasure<T>,
    pub trace: ImfTrace<T>,
    pub converged: bool,
    pub oracle: Option<Coupling<T>>,
}

const MARGINAL_TOL: f64 = 1e-9;

fn check_marginal<T: Scalar>(actual: &[T], expected: &[T], name: &str) -> Result<()> {
    let err = actual
        .iter()
        .zip(expected)
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max);
    if err > T::lit(MARGINAL_TOL) {
        return Err(Error::InvalidParameter(format!(
            "initial coupling {name} marginal is off by {err}"
        )));
    }
    Ok(())
}

/// Run IMF from `initial` until the coupling stops moving or `max_iters` is
/// reached. Non-convergence is reported through `converged`; the trace is
/// returned either way.
pub fn run_imf<T: Scalar, R: MarkovReference<T> + ?Sized>(
    gamma: &[T],
    xi: &[T],
    initial: Coupling<T>,
    reference: &R,
    cfg: &ImfConfig<T>,
) -> Result<ImfOutcome<T>> {
    if cfg.max_iters < 1 {
        return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
    }
    if !(cfg.tol_coupling_tv > T::zero()) {
        return Err(Error::InvalidParameter(
            "tol_coupling_tv must be > 0".into(),
        ));
    }
    validate_distribution(gamma, "gamma")?;
    validate_distribution(xi, "xi")?;
    let d = reference.num_states();
    for v in [gamma, xi] {
        if v.len() != d {
            return Err(Error::SizeMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    check_marginal(&initial.row_marginal(), gamma, "initial")?;
    check_marginal(&initial.col_marginal(), xi, "terminal")?;

    let oracle = if cfg.log_kl_to_oracle {
        Some(static_sb_sinkhorn(gamma, xi, reference, &cfg.sinkhorn)?.coupling)
    } else {
        None
    };
    let grid = GridKernels::new(reference)?;
    let oracle_chain = match &oracle {
        Some(o) => Some(markov_projection(&ReciprocalMeasure::with_grid(
            o.clone(),
            reference,
            grid.clone(),
        )?)?),
        None => None,
    };
    let mut coupling = initial;
    let mut previous: Option<MarkovChainMeasure<T>> = None;
    let mut records = Vec::new();
    let mut converged = false;

    for it in 1..=cfg.max_iters {
        let direction = Direction::for_iteration(it, cfg.alternate_direction);
        let rec = ReciprocalMeasure::with_grid(coupling.clone(), reference, grid.clone())?;
        let (markov, next) = match direction {
            Direction::Forward => {
                let m = markov_projection(&rec)?;
                let c = m.coupling()?;
                (m, c)
            }
            Direction::Backward => {
                let b = markov_projection_reverse(&rec)?;
                let c = b.coupling()?;
                (b.to_forward()?, c)
            }
        };
        let tv_change = next.tv(&coupling);
        let kl_to_oracle = match &oracle {
            Some(o) => Some(kl_couplings(&next, o)?),
            None => None,
        };
        let path_kl_to_oracle = oracle_chain
            .as_ref()
            .map(|o| kl_markov_paths(&markov, o).unwrap_or(T::infinity()));
        let path_kl = previous
            .as_ref()
            .map(|prev| kl_markov_paths(&markov, prev).unwrap_or(T::infinity()));
        records.push(IterationRecord {
            iteration: it,
            direction,
            tv_change,
            kl_to_oracle,
            path_kl_to_oracle,
            path_kl,
        });
        coupling = next;
        previous = Some(markov);
        if tv_change < cfg.tol_coupling_tv {
            converged = true;
            break;
        }
    }

    Ok(ImfOutcome {
        coupling,
        markov: previous.expect("at least one iteration"),
        trace: ImfTrace {
            n_steps: reference.n_steps(),
            records,
        },
        converged,
        oracle,
    })
}

/// Largest deviation of the coupling's marginals from `(gamma, xi)` in TV.
pub fn marginal_drift<T: Scalar>(coupling: &Coupling<T>, gamma: &[T], xi: &[T]) -> (T, T) {
    (
        total_variation(&coupling.row_marginal(), gamma),
        total_variation(&coupling.col_marginal(), xi),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation<T> {
    pub iteration: usize,
    pub increase: T,
}

#[derive(Debug, Clone)]
pub struct ImfReport<T> {
    /// Coupling-level `KL(π_n ‖ π_SB)` never increased.
    pub monotone: bool,
    pub violations: Vec<MonotonicityViolation<T>>,
    /// Path-level `KL(M_n ‖ M_SB)` never increased, when logged.
    pub path_monotone: Option<bool>,
    /// Grids below [`COARSE_GRID_STEPS`] are flagged: the grid process is
    /// then a poor stand-in for the continuous-time one.
    pub coarse_grid: bool,
    pub table: String,
}

pub const MONOTONE_SLACK: f64 = 1e-10;
pub const COARSE_GRID_STEPS: usize = 20;

/// Check that `KL(π_n ‖ π_SB)` never increases (up to [`MONOTONE_SLACK`])
/// and render the per-iteration table. Violations are reported, not raised.
pub fn imf_diagnostics<T: Scalar>(trace: &ImfTrace<T>) -> Result<ImfReport<T>> {
    if trace.records.is_empty() {
        return Err(Error::InvalidParameter("empty IMF trace".into()));
    }
    let kls = trace
        .records
        .iter()
        .map(|r| r.kl_to_oracle)
        .collect::<Option<Vec<T>>>()
        .ok_or_else(|| Error::InvalidParameter("trace has no oracle KL column".into()))?;
    let slack = T::lit(MONOTONE_SLACK);
    let violations: Vec<_> = kls
        .windows(2)
        .zip(&trace.records[1..])
        .filter(|(w, _)| w[1] > w[0] + slack)
        .map(|(w, r)| MonotonicityViolation {
            iteration: r.iteration,
            increase: w[1] - w[0],
        })
        .collect();
    let path_monotone = trace
        .records
        .iter()
        .map(|r| r.path_kl_to_oracle)
        .collect::<Option<Vec<T>>>()
        .map(|v| v.windows(2).all(|w| w[1] <= w[0] + slack));
    let mut table = String::from(
        "iteration  direction  tv_change               kl_to_oracle            path_kl\n",
    );
    for r in &trace.records {
        let path = r
            .path_kl
            .map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        let kl = r
            .kl_to_oracle
            .map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        let _ = writeln!(
            table,
            "{:>9}  {:<9}  {:<22}  {:<22}  {}",
            r.iteration,
            r.direction.as_str(),
            format!("{:.6e}", r.tv_change),
            kl,
            path
        );
    }
    if !violations.is_empty() && trace.n_steps < COARSE_GRID_STEPS {
        let _ = writeln!(
            table,
            "note: grid of {} steps is coarse; refine before reading monotonicity",
            trace.n_steps
        );
    }
    Ok(ImfReport {
        monotone: violations.is_empty(),
        violations,
        path_monotone,
        coarse_grid: trace.n_steps < COARSE_GRID_STEPS,
        table,
    })
}
