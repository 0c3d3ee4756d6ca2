use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type accepted by every numerical routine in the crate.
///
/// Implemented for `f32` and `f64`. Tolerances quoted in the docs assume
/// `f64`; `f32` runs the same code paths at single precision.
pub trait Scalar:
    faer::traits::RealField
    + Float
    + FromPrimitive
    + ToPrimitive
    + Copy
    + Default
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    /// Converts an `f64` constant, rounding to the target precision.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("real scalar")
    }

    /// Precision-aware slack used by symmetry and PSD checks.
    #[inline]
    fn tolerance_floor(base: f64) -> Self {
        let eps = <Self as Float>::epsilon();
        let scaled = eps * Self::lit(1024.0);
        let base = Self::lit(base);
        if scaled > base {
            scaled
        } else {
            base
        }
    }
}

macro_rules! impl_scalar {
    ($($t:ty)*) => ($(
        impl Scalar for $t {}
    )*)
}

impl_scalar!(f32 f64);
