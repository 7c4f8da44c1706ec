//! Exact Schrödinger bridges between distributions on finite state spaces.
//!
//! The reference process is a continuous-time Markov chain that mixes towards
//! a prior, sampled on a uniform time grid. On that grid every path measure
//! is a finite object, so the iterative Markovian fitting (IMF) loop, its
//! projections and the KL divergences between path measures are computed
//! exactly and checked against an independent entropic optimal transport
//! (Sinkhorn) solve of the static problem.
//!
//! The graph layer factorizes the process over node and edge labels; graph
//! matching under the resulting likelihood is a quadratic assignment problem,
//! solved by relaxation plus Hungarian rounding.
//!
//! All numerics are generic over [`Scalar`] (`f32`/`f64`); the aliases below
//! fix the common `f64` instantiation.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bridge;
pub mod eot;
pub mod error;
pub mod graph;
pub mod imf;
pub mod io;
pub mod linalg;
pub mod measures;
pub mod qap;
pub mod scalar;
pub mod state_process;
pub mod tabular;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use scalar::Scalar;
pub use state_process::{MarkovReference, StateSpace};

pub type NoiseSchedule = state_process::NoiseSchedule<f64>;
pub type Prior = state_process::Prior<f64>;
pub type ReferenceProcess = state_process::ReferenceProcess<f64>;
pub type TransitionKernel = state_process::TransitionKernel<f64>;
pub type RateMatrix = state_process::RateMatrix<f64>;
pub type Coupling = measures::Coupling<f64>;
pub type MarkovChainMeasure = measures::MarkovChainMeasure<f64>;
pub type BackwardChain = measures::BackwardChain<f64>;
pub type JumpPath = bridge::JumpPath<f64>;
pub type ImfConfig = imf::ImfConfig<f64>;
pub type SinkhornConfig = eot::SinkhornConfig<f64>;
pub type GraphVocab = graph::GraphVocab<f64>;
pub type GraphProcess = graph::GraphProcess<f64>;
pub type FlatGraphSpace = graph::FlatGraphSpace<f64>;
pub type QapCost = qap::QapCost<f64>;
/// Single-precision matching cost, for the relaxation run in `f32`.
pub type QapCost32 = qap::QapCost<f32>;
pub type TabularPredictor = tabular::TabularPredictor<f64>;
