use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};
use std::fmt::Debug;

/// Arithmetic the tableau simplex needs. `f64` compares against a small
/// epsilon; `BigRational` is exact.
pub trait LpScalar: Num + Signed + Clone + PartialOrd + Debug {
    /// Magnitudes at or below this are treated as zero.
    fn eps() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;

    /// Flushes values that are numerically indistinguishable from zero.
    fn clean(self) -> Self {
        self
    }

    /// Smallest magnitude accepted as a pivot element. Larger than `eps`
    /// because cancellation leaves residue well above machine precision.
    fn pivot_tol() -> Self {
        Self::eps()
    }

    fn is_negligible(&self) -> bool {
        self.abs() <= Self::eps()
    }
}

impl LpScalar for f64 {
    fn eps() -> Self {
        1e-11
    }

    fn pivot_tol() -> Self {
        1e-9
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn clean(self) -> Self {
        if self.abs() < 1e-13 {
            0.0
        } else {
            self
        }
    }
}

impl LpScalar for BigRational {
    fn eps() -> Self {
        BigRational::zero()
    }

    fn from_f64(v: f64) -> Self {
        // Every finite f64 is a dyadic rational, so this is exact.
        BigRational::from_float(v).unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}
