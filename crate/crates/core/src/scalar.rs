//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + ScalarOperand
    + LinalgScalar
    + FromStr
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` constant.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }

    /// Conversion from a count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean, `None` for an empty slice.
pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().copied().sum::<T>() / T::of_usize(xs.len()))
    }
}

/// Sample variance with the `n - 1` denominator (zero for a single value).
pub fn sample_variance<T: Real>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(T::zero());
    }
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some(ss / T::of_usize(xs.len() - 1))
}
