//! Numeric scalars the coupling machinery is generic over.
//!
//! Probabilities, lower bounds and interval ends are all carried in a [`Scalar`].
//! Floating-point types are the working default; `Rational64` makes the interval
//! layout exact, which is handy when checking the telescoping identities.

use std::fmt::Debug;

use num_rational::{Rational32, Rational64};
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// A probability-like scalar: ordered field operations plus conversions to and from `f64`.
pub trait Scalar: Num + PartialOrd + Copy + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Slack allowed when checking that a distribution sums to one.
    const SUM_TOLERANCE: f64;

    /// Lossy conversion used for reporting and tolerance checks.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from a double; panics only on non-finite input.
    fn of_f64(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| panic!("{x} is not representable"))
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    const SUM_TOLERANCE: f64 = 1e-12;
}

impl Scalar for f32 {
    const SUM_TOLERANCE: f64 = 1e-6;
}

impl Scalar for Rational64 {
    const SUM_TOLERANCE: f64 = 0.0;
}

impl Scalar for Rational32 {
    const SUM_TOLERANCE: f64 = 0.0;
}

/// Scalars with square roots, needed by kernels defined through irrational formulas.
pub trait Real: Scalar + Float {}

impl Real for f32 {}
impl Real for f64 {}
