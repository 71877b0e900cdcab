//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the solvers are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in the scalar type")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("integer representable in the scalar type")
}

#[inline]
pub fn from_i32<T: Real>(n: i32) -> T {
    T::from_i32(n).expect("integer representable in the scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Critical Sobolev exponent `2N/(N-2)`; `None` when `N <= 2`.
pub fn critical_exponent<T: Real>(dim: usize) -> Option<T> {
    (dim >= 3).then(|| from_usize::<T>(2 * dim) / from_usize::<T>(dim - 2))
}

/// Surface area of the unit sphere in `R^N`, `2 pi^{N/2} / Gamma(N/2)`.
///
/// For `N = 1` this is 2 (the two endpoints of the unit "sphere"), which
/// makes radial integrals over the line come out as full-line integrals.
pub fn unit_sphere_area<T: Real>(dim: usize) -> T {
    assert!(dim >= 1, "dimension must be positive");
    // Gamma(N/2) for integer N through the half-integer recursion.
    let half = lit::<T>(0.5);
    let mut gamma = if dim.is_multiple_of(2) { T::one() } else { T::PI().sqrt() };
    let mut x = if dim.is_multiple_of(2) { T::one() } else { half };
    let target = from_usize::<T>(dim) * half;
    while x < target - lit(1e-3) {
        gamma *= x;
        x += T::one();
    }
    lit::<T>(2.0) * T::PI().powf(target) / gamma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area::<f64>(1) - 2.0).abs() < 1e-14);
        assert!((unit_sphere_area::<f64>(2) - 2.0 * std::f64::consts::PI).abs() < 1e-13);
        assert!((unit_sphere_area::<f64>(3) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
        let pi = std::f64::consts::PI;
        assert!((unit_sphere_area::<f64>(4) - 2.0 * pi * pi).abs() < 1e-12);
        assert!((unit_sphere_area::<f64>(5) - 8.0 * pi * pi / 3.0).abs() < 1e-12);
    }

    #[test]
    fn critical_exponents() {
        assert_eq!(critical_exponent::<f64>(2), None);
        assert_eq!(critical_exponent::<f64>(3), Some(6.0));
        assert_eq!(critical_exponent::<f64>(4), Some(4.0));
        assert_eq!(critical_exponent::<f32>(6), Some(3.0));
    }
}
