//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All kinematic and estimation code is written against [`Real`], which is
//! implemented for `f32` and `f64`. The bound is nalgebra's `RealField`
//! (itself built on `num-traits`) plus `ToPrimitive` for reporting.

use nalgebra::RealField;
use num_traits::ToPrimitive;

pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn finite(self) -> bool {
        self.to_f64_lossy().is_finite()
    }
}

impl<T> Real for T where T: RealField + Copy + ToPrimitive {}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(angle: T) -> T {
    let two_pi = T::two_pi();
    let mut a = angle % two_pi;
    if a > T::pi() {
        a -= two_pi;
    } else if a <= -T::pi() {
        a += two_pi;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_angle(0.3f32) - 0.3).abs() < 1e-7);
        for k in -20..20 {
            let a = 0.37 * k as f64;
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            let turns = (a - w) / (2.0 * PI);
            assert!((turns - turns.round()).abs() < 1e-9);
        }
    }
}
