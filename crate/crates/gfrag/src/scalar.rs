//! Scalar abstraction shared by the analytic parts of the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point type usable by the spectral and cumulant code.
///
/// Implemented for `f32` and `f64`. Simulation code is `f64` only.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync {
    /// Relative tolerance that power iteration and root finding can reach.
    fn solver_tol() -> Self;
}

impl Scalar for f64 {
    fn solver_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn solver_tol() -> Self {
        2e-6
    }
}

#[inline]
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite literal")
}

#[inline]
pub(crate) fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
