//! Scalar abstractions shared by the pass-rate and reward kernels.
//!
//! Pass rates are compared against fixed decimal thresholds (0.4, 0.8). With
//! `f64` those comparisons inherit binary rounding; with [`ExactRate`] they are
//! decided exactly. Code that only needs ordering and a handful of rational
//! constants is written against [`PassScalar`] so either representation works.

use std::ops::Add;

use num_rational::Ratio;
use num_traits::Zero;

/// Exact pass rate: `passed / total` as a reduced fraction.
pub type ExactRate = Ratio<u64>;

/// A totally usable ordered scalar that can represent small rational constants.
pub trait PassScalar: Copy + PartialOrd + Add<Output = Self> + Zero {
    /// Builds `num / den`. `den` must be nonzero.
    fn from_ratio(num: u64, den: u64) -> Self;
}

impl PassScalar for f64 {
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
}

impl PassScalar for f32 {
    fn from_ratio(num: u64, den: u64) -> Self {
        (num as f64 / den as f64) as f32
    }
}

impl PassScalar for ExactRate {
    fn from_ratio(num: u64, den: u64) -> Self {
        Ratio::new(num, den)
    }
}
