//! Constant-curvature forward kinematics.
//!
//! A bending segment is a circular arc described by its bend angle `theta`,
//! arc length `length` and bend-plane direction `delta`. The full robot is the
//! sheath arc, a straight connecting piece of length `Ln` along the sheath tip
//! tangent, and the catheter arc. The base frame sits at the guiding-tube exit
//! with z along the tube.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{wrap_angle, Real};
use crate::transform::{Pose, Rotation};

/// Below this |theta| (rad) the arc factors use their Taylor expansions.
pub const SINGULAR_THRESHOLD: f64 = 1e-6;

/// Shape of the two-segment robot: `[theta1, L1, delta1, theta2, L2, delta2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct ConfigPsi<T: Real> {
    pub theta1: T,
    pub l1: T,
    pub delta1: T,
    pub theta2: T,
    pub l2: T,
    pub delta2: T,
}

impl<T: Real> ConfigPsi<T> {
    /// Builds a validated shape. Bend directions are wrapped into `(-pi, pi]`.
    pub fn new(theta1: T, l1: T, delta1: T, theta2: T, l2: T, delta2: T) -> Result<Self> {
        let psi = Self {
            theta1,
            l1,
            delta1: wrap_angle(delta1),
            theta2,
            l2,
            delta2: wrap_angle(delta2),
        };
        psi.validate(T::pi())?;
        Ok(psi)
    }

    pub fn from_vector(v: &Vector6<T>) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    /// Component order matches the Jacobian column order.
    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.theta1,
            self.l1,
            self.delta1,
            self.theta2,
            self.l2,
            self.delta2,
        )
    }

    pub fn straight(l1: T, l2: T) -> Result<Self> {
        let z = T::zero();
        Self::new(z, l1, z, z, l2, z)
    }

    /// The same shape written with each bend direction within a quarter turn
    /// of `reference`'s; `(theta, delta)` and `(-theta, delta + pi)` describe
    /// the same arc.
    pub fn aligned_to(&self, reference: &Self) -> Self {
        let flip = |theta: T, delta: T, r: T| {
            if (delta - r).cos() < T::zero() {
                (-theta, wrap_angle(delta + T::pi()))
            } else {
                (theta, delta)
            }
        };
        let (theta1, delta1) = flip(self.theta1, self.delta1, reference.delta1);
        let (theta2, delta2) = flip(self.theta2, self.delta2, reference.delta2);
        Self {
            theta1,
            delta1,
            theta2,
            delta2,
            ..*self
        }
    }

    /// Checks finiteness, positive arc lengths and `|theta| < theta_max`.
    pub fn validate(&self, theta_max: T) -> Result<()> {
        if !self.to_vector().iter().all(|x| x.finite()) {
            return Err(Error::NonFinite("shape configuration"));
        }
        if self.l1 <= T::zero() || self.l2 <= T::zero() {
            return Err(Error::Range(format!(
                "arc lengths must be positive (L1 = {}, L2 = {})",
                self.l1, self.l2
            )));
        }
        if self.theta1.abs() >= theta_max || self.theta2.abs() >= theta_max {
            return Err(Error::Range(format!(
                "bend angle exceeds {} rad (theta1 = {}, theta2 = {})",
                theta_max, self.theta1, self.theta2
            )));
        }
        Ok(())
    }
}

/// Kinematic constants that are not part of the shape vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct RobotGeometry<T: Real> {
    /// Straight middle-segment length `Ln`, mm.
    pub straight_length: T,
    /// Arc-length distance of each coil back from its segment end, mm (sheath, catheter).
    pub coil_offsets: [T; 2],
}

impl<T: Real> RobotGeometry<T> {
    pub fn new(straight_length: T, coil_offsets: [T; 2]) -> Result<Self> {
        let g = Self {
            straight_length,
            coil_offsets,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_straight_length(&self, straight_length: T) -> Self {
        Self {
            straight_length,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.straight_length.finite() || self.straight_length < T::zero() {
            return Err(invalid("straight_length", "must be finite and >= 0"));
        }
        if self
            .coil_offsets
            .iter()
            .any(|o| !o.finite() || *o < T::zero())
        {
            return Err(invalid("coil_offsets", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Which evaluation of the arc factors to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcBranch {
    /// Taylor series below [`SINGULAR_THRESHOLD`], closed form above.
    Auto,
    Series,
    ClosedForm,
}

/// `h = (1 - cos t)/t`, `s = sin t / t` and their derivatives in `t`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ArcFactors<T> {
    pub h: T,
    pub s: T,
    pub dh: T,
    pub ds: T,
}

impl<T: Real> ArcFactors<T> {
    pub(crate) fn new(theta: T, branch: ArcBranch) -> Self {
        let series = match branch {
            ArcBranch::Auto => theta.abs() < T::lit(SINGULAR_THRESHOLD),
            ArcBranch::Series => true,
            ArcBranch::ClosedForm => false,
        };
        let t = theta;
        let t2 = t * t;
        let (h, s) = if series {
            (
                t * (T::lit(0.5) - t2 / T::lit(24.0)),
                T::one() - t2 / T::lit(6.0) + t2 * t2 / T::lit(120.0),
            )
        } else {
            let half = (t * T::lit(0.5)).sin();
            (T::lit(2.0) * half * half / t, t.sin() / t)
        };
        // The derivative forms cancel badly for small angles, so their series
        // region is wider than the one used for the factors themselves.
        let (dh, ds) = if series || t.abs() < T::lit(0.1) {
            (
                T::lit(0.5) - t2 / T::lit(8.0) + t2 * t2 / T::lit(144.0)
                    - t2 * t2 * t2 / T::lit(5760.0)
                    + t2 * t2 * t2 * t2 / T::lit(403200.0),
                t * (-T::one() / T::lit(3.0) + t2 / T::lit(30.0) - t2 * t2 / T::lit(840.0)
                    + t2 * t2 * t2 / T::lit(45360.0)
                    - t2 * t2 * t2 * t2 / T::lit(3991680.0)),
            )
        } else {
            ((t.sin() - h) / t, (t.cos() - s) / t)
        };
        Self { h, s, dh, ds }
    }
}

pub(crate) fn check_segment<T: Real>(theta: T, length: T, delta: T) -> Result<()> {
    if !theta.finite() || !delta.finite() || !length.finite() {
        return Err(Error::NonFinite("segment parameter"));
    }
    if length <= T::zero() {
        return Err(invalid(
            "segment length",
            format!("must be > 0, got {length}"),
        ));
    }
    Ok(())
}

pub(crate) fn segment_rotation<T: Real>(theta: T, delta: T) -> Rotation<T> {
    Rotation::rot_z_unchecked(delta)
        * Rotation::rot_y_unchecked(theta)
        * Rotation::rot_z_unchecked(-delta)
}

/// Pose of a segment's end frame in its base frame.
pub fn segment_fk<T: Real>(theta: T, length: T, delta: T) -> Result<Pose<T>> {
    segment_fk_with(theta, length, delta, ArcBranch::Auto)
}

/// [`segment_fk`] with an explicit choice of arc-factor branch.
pub fn segment_fk_with<T: Real>(
    theta: T,
    length: T,
    delta: T,
    branch: ArcBranch,
) -> Result<Pose<T>> {
    check_segment(theta, length, delta)?;
    let f = ArcFactors::new(theta, branch);
    let (sd, cd) = delta.sin_cos();
    let position = Vector3::new(f.h * cd, f.h * sd, f.s) * length;
    Ok(Pose::new(segment_rotation(theta, delta), position))
}

/// Arc parameters of the portion of a segment ending `offset` before its tip.
pub(crate) fn partial_arc<T: Real>(theta: T, length: T, offset: T) -> Result<(T, T)> {
    if offset == T::zero() {
        return Ok((theta, length));
    }
    if offset >= length {
        return Err(invalid(
            "coil offset",
            format!("offset {offset} must be shorter than the segment ({length})"),
        ));
    }
    let kept = length - offset;
    Ok((theta * kept / length, kept))
}

/// `¹ᵇT₂ₑ = T₁(seg 1) · Tz(Ln) · T₂(seg 2)`.
pub fn full_fk<T: Real>(psi: &ConfigPsi<T>, geom: &RobotGeometry<T>) -> Result<Pose<T>> {
    let seg1 = segment_fk(psi.theta1, psi.l1, psi.delta1)?;
    let seg2 = segment_fk(psi.theta2, psi.l2, psi.delta2)?;
    Ok(seg1
        .compose(&Pose::translate_z(geom.straight_length))
        .compose(&seg2))
}

/// Frames of the sheath coil and catheter coil, both in the robot base frame.
///
/// With zero coil offsets the catheter coil frame is exactly [`full_fk`].
pub fn coil_fk<T: Real>(psi: &ConfigPsi<T>, geom: &RobotGeometry<T>) -> Result<(Pose<T>, Pose<T>)> {
    let seg1 = segment_fk(psi.theta1, psi.l1, psi.delta1)?;
    let (t1, l1) = partial_arc(psi.theta1, psi.l1, geom.coil_offsets[0])?;
    let coil1 = segment_fk(t1, l1, psi.delta1)?;
    let (t2, l2) = partial_arc(psi.theta2, psi.l2, geom.coil_offsets[1])?;
    let coil2 = seg1
        .compose(&Pose::translate_z(geom.straight_length))
        .compose(&segment_fk(t2, l2, psi.delta2)?);
    Ok((coil1, coil2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{rot_y, rot_z};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Endpoint of the arc by Simpson integration of the frame tangent
    /// `Rz(d) Ry(k s) Rz(-d) e_z` over arc length.
    fn integrate_arc(theta: f64, length: f64, delta: f64, n: usize) -> Vector3<f64> {
        let k = theta / length;
        let tangent = |s: f64| {
            let r = rot_z(delta).unwrap() * rot_y(k * s).unwrap() * rot_z(-delta).unwrap();
            r.z_axis()
        };
        let h = length / n as f64;
        let mut acc = tangent(0.0) + tangent(length);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += tangent(i as f64 * h) * w;
        }
        acc * (h / 3.0)
    }

    #[test]
    fn straight_limit() {
        let p = segment_fk(1e-12, 50.0, 0.7).unwrap();
        assert!((p.position - Vector3::new(0.0, 0.0, 50.0)).norm() < 1e-9);
        assert!((p.rotation.matrix() - nalgebra::Matrix3::identity()).norm() < 1e-11);
        let p = segment_fk(0.0, 50.0, 0.7).unwrap();
        assert_eq!(p.position, Vector3::new(0.0, 0.0, 50.0));
    }

    #[test]
    fn quarter_circle() {
        let p = segment_fk(FRAC_PI_2, 25.0 * PI, 0.0).unwrap();
        assert!((p.position - Vector3::new(50.0, 0.0, 50.0)).norm() < 1e-12);
        assert!((p.rotation.matrix() - rot_y(FRAC_PI_2).unwrap().matrix()).norm() < 1e-14);
        let p = segment_fk(FRAC_PI_2, 25.0 * PI, FRAC_PI_2).unwrap();
        assert!((p.position - Vector3::new(0.0, 50.0, 50.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(segment_fk(0.1, 0.0, 0.0).is_err());
        assert!(segment_fk(0.1, -2.0, 0.0).is_err());
        assert!(segment_fk(f64::NAN, 2.0, 0.0).is_err());
        assert!(ConfigPsi::new(0.1, 10.0, 0.0, 3.5, 10.0, 0.0).is_err());
        assert!(ConfigPsi::new(0.1, 10.0, 0.0, 0.1, -1.0, 0.0).is_err());
    }

    #[test]
    fn config_wraps_delta() {
        let psi = ConfigPsi::new(0.1, 10.0, 3.0 * PI, 0.1, 10.0, -PI).unwrap();
        assert!((psi.delta1 - PI).abs() < 1e-12);
        assert!((psi.delta2 - PI).abs() < 1e-12);
    }

    #[test]
    fn fully_straight_robot() {
        let psi = ConfigPsi::new(1e-13, 60.0, 0.3, 0.0, 45.0, -1.0).unwrap();
        let geom = RobotGeometry::new(20.0, [0.0, 0.0]).unwrap();
        let tip = full_fk(&psi, &geom).unwrap();
        assert!((tip.position - Vector3::new(0.0, 0.0, 125.0)).norm() < 1e-9);
        let (c1, c2) = coil_fk(&psi, &geom).unwrap();
        assert!((c1.position - Vector3::new(0.0, 0.0, 60.0)).norm() < 1e-9);
        assert!((c1.tangent() - Vector3::z()).norm() < 1e-12);
        assert!((c2.tangent() - Vector3::z()).norm() < 1e-12);
        assert_eq!(c2, tip);
    }

    #[test]
    fn rigid_extension_of_quarter_circle() {
        let psi = ConfigPsi::new(FRAC_PI_2, 25.0 * PI, 0.0, 0.0, 30.0, 0.0).unwrap();
        let geom = RobotGeometry::new(0.0, [0.0, 0.0]).unwrap();
        let tip = full_fk(&psi, &geom).unwrap();
        assert!((tip.position - Vector3::new(80.0, 0.0, 50.0)).norm() < 1e-12);
    }

    #[test]
    fn coil_offsets_move_coils_back_along_the_arc() {
        let psi = ConfigPsi::new(0.8, 60.0, 0.4, -0.6, 40.0, 2.0).unwrap();
        let geom = RobotGeometry::new(12.0, [10.0, 5.0]).unwrap();
        let (c1, _) = coil_fk(&psi, &geom).unwrap();
        let direct = segment_fk(0.8 * 50.0 / 60.0, 50.0, 0.4).unwrap();
        assert!((c1.position - direct.position).norm() < 1e-12);
        let bad = RobotGeometry::new(12.0, [70.0, 0.0]).unwrap();
        assert!(coil_fk(&psi, &bad).is_err());
    }

    #[test]
    fn matches_arc_integration() {
        for &(theta, length, delta) in &[
            (0.3, 40.0, 0.2),
            (-1.7, 75.0, 2.9),
            (2.5, 30.0, -1.2),
            (1e-4, 55.0, 1.0),
        ] {
            let oracle = integrate_arc(theta, length, delta, 100_000);
            let p = segment_fk(theta, length, delta).unwrap().position;
            assert!(
                (p - oracle).norm() < 1e-6,
                "{theta} {length} {delta}: {}",
                (p - oracle).norm()
            );
        }
    }

    #[test]
    fn series_and_closed_form_agree_near_threshold() {
        for &t in &[0.5e-6, 1.5e-6, -1e-6] {
            let a = segment_fk_with(t, 50.0, 0.4, ArcBranch::Series).unwrap();
            let b = segment_fk_with(t, 50.0, 0.4, ArcBranch::ClosedForm).unwrap();
            assert!((a.position - b.position).norm() < 1e-12);
        }
        let eps = 1e-9;
        let lo = segment_fk(SINGULAR_THRESHOLD * (1.0 - eps), 80.0, -2.0).unwrap();
        let hi = segment_fk(SINGULAR_THRESHOLD * (1.0 + eps), 80.0, -2.0).unwrap();
        assert!((lo.position - hi.position).norm() < 1e-9);
    }

    #[test]
    fn works_in_f32() {
        let p = segment_fk(
            std::f32::consts::FRAC_PI_2,
            25.0 * std::f32::consts::PI,
            0.0f32,
        )
        .unwrap();
        assert!((p.position - Vector3::new(50.0f32, 0.0, 50.0)).norm() < 1e-4);
    }

    proptest! {
        #[test]
        fn position_lies_on_bend_circle(theta in 0.01f64..3.0, length in 5.0f64..120.0, delta in -PI..PI) {
            let p = segment_fk(theta, length, delta).unwrap().position;
            let radius = length / theta;
            let in_plane = Vector3::new(delta.cos(), delta.sin(), 0.0);
            let normal = in_plane.cross(&Vector3::z());
            prop_assert!(p.dot(&normal).abs() < 1e-9);
            // circle centre is at radius along the in-plane direction
            let centre = in_plane * radius;
            prop_assert!(((p - centre).norm() - radius).abs() < 1e-9 * radius.max(1.0));
            prop_assert!(p.norm() <= length + 1e-9);
        }

        #[test]
        fn delta_equivariance(theta in -3.0f64..3.0, length in 5.0f64..120.0, delta in -PI..PI, phi in -PI..PI) {
            let a = segment_fk(theta, length, delta + phi).unwrap();
            let b = segment_fk(theta, length, delta).unwrap();
            let rz = rot_z(phi).unwrap();
            let rotated = rz * b.rotation * rz.transpose();
            prop_assert!((a.rotation.matrix() - rotated.matrix()).norm() < 1e-10);
            prop_assert!((a.position - rz.apply(&b.position)).norm() < 1e-10);
        }

        #[test]
        fn full_fk_is_explicit_composition(
            t1 in -2.5f64..2.5, l1 in 20.0f64..100.0, d1 in -PI..PI,
            t2 in -2.5f64..2.5, l2 in 20.0f64..100.0, d2 in -PI..PI, ln in 0.0f64..40.0,
        ) {
            let psi = ConfigPsi::new(t1, l1, d1, t2, l2, d2).unwrap();
            let geom = RobotGeometry::new(ln, [0.0, 0.0]).unwrap();
            let tip = full_fk(&psi, &geom).unwrap();
            let s1 = segment_fk(t1, l1, d1).unwrap();
            let s2 = segment_fk(t2, l2, d2).unwrap();
            let expected = s1.position + s1.rotation.apply(&(Vector3::new(0.0, 0.0, ln) + s2.position));
            prop_assert!((tip.position - expected).norm() < 1e-10);
            let (_, c2) = coil_fk(&psi, &geom).unwrap();
            prop_assert_eq!(c2, tip);
        }

        #[test]
        fn aligned_shape_is_the_same_shape(
            t1 in -2.5f64..2.5, d1 in -PI..PI, t2 in -2.5f64..2.5, d2 in -PI..PI,
            r1 in -PI..PI, r2 in -PI..PI,
        ) {
            let psi = ConfigPsi::new(t1, 60.0, d1, t2, 40.0, d2).unwrap();
            let reference = ConfigPsi::new(0.3, 60.0, r1, 0.3, 40.0, r2).unwrap();
            let a = psi.aligned_to(&reference);
            prop_assert!((a.delta1 - r1).cos() >= 0.0 && (a.delta2 - r2).cos() >= 0.0);
            let geom = RobotGeometry::new(10.0, [0.0, 0.0]).unwrap();
            let (p1, p2) = coil_fk(&psi, &geom).unwrap();
            let (q1, q2) = coil_fk(&a, &geom).unwrap();
            prop_assert!((p1.position - q1.position).norm() < 1e-10);
            prop_assert!((p2.position - q2.position).norm() < 1e-10);
            prop_assert!((p2.rotation.matrix() - q2.rotation.matrix()).norm() < 1e-12);
        }
    }
}
