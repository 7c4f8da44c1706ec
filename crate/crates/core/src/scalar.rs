//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the engine is generic over. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Absolute tolerance used when validating stochastic objects
    /// (row sums, total mass).
    fn validation_tol() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f64 {
    fn validation_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn validation_tol() -> Self {
        1e-5
    }
}

/// `x * ln(x / y)` with the `0 ln 0 = 0` convention. Returns `None` when
/// `x > 0` and `y == 0`.
pub(crate) fn xlogy_ratio<T: Scalar>(x: T, y: T) -> Option<T> {
    if x <= T::zero() {
        Some(T::zero())
    } else if y <= T::zero() {
        None
    } else {
        Some(x * (x / y).ln())
    }
}

/// Numerically stable `ln Σ exp(v_i)`; returns `-inf` for an empty or
/// all-`-inf` input.
pub(crate) fn log_sum_exp<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let acc: T = values.map(|v| (v - max).exp()).sum();
    max + acc.ln()
}
