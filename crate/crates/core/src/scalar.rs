//! Scalar abstraction shared by the ledger, the trimming accumulator and the
//! statistics built on top of them.
//!
//! Integer-valued observables are accumulated in `i128` so that the
//! decomposition and trimming identities hold exactly; real-valued
//! observables (powers, `t log t`) use `f64`. Exact rationals work too, which
//! the hand-built fixtures in the tests rely on.

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_traits::{FromPrimitive, ToPrimitive, Zero};

/// Value type of an observable along an orbit.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    /// `n` as a scalar. Panics only if `n` is not representable, which for
    /// step counts would mean an orbit longer than the scalar can count.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("step count not representable in scalar type")
    }

    /// `self * n`, the contribution of a run of `n` equal values.
    fn times(&self, n: u64) -> Self {
        self.clone() * Self::from_count(n)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Larger of two values; the left one wins ties.
    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl<T> Scalar for T where
    T: Clone
        + Debug
        + PartialOrd
        + Zero
        + Add<Output = T>
        + Sub<Output = T>
        + Mul<Output = T>
        + FromPrimitive
        + ToPrimitive
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    #[test]
    fn times_matches_repeated_addition() {
        assert_eq!(7i128.times(5), 35);
        assert_eq!(0.5f64.times(4), 2.0);
        let r = BigRational::new(BigInt::from(2), BigInt::from(3));
        assert_eq!(r.times(3), BigRational::from_integer(BigInt::from(2)));
    }

    #[test]
    fn max_of_keeps_left_on_ties() {
        assert_eq!(i128::max_of(3, 3), 3);
        assert_eq!(f64::max_of(1.0, 2.5), 2.5);
    }
}
