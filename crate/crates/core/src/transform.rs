//! Rigid-body math: rotation matrices, homogeneous poses and the skew operator.
//!
//! Rotations are kept as full 3x3 matrices. Frames are right-handed, angles are
//! in radians and lengths in millimetres.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A proper rotation stored as a 3x3 orthonormal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct Rotation<T: Real>(Matrix3<T>);

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<T>) -> Self {
        Self(m)
    }

    /// Wraps a matrix after checking `R^T R = I` and `det R = 1` within `tol`.
    pub fn from_matrix(m: Matrix3<T>, tol: T) -> Result<Self> {
        let r = Self(m);
        if r.orthonormality_error() > tol || (m.determinant() - T::one()).abs() > tol {
            return Err(Error::Precondition(
                "matrix is not a proper rotation".into(),
            ));
        }
        Ok(r)
    }

    pub fn rot_z(angle: T) -> Result<Self> {
        if !angle.finite() {
            return Err(Error::NonFinite("rotation angle"));
        }
        Ok(Self::rot_z_unchecked(angle))
    }

    pub fn rot_y(angle: T) -> Result<Self> {
        if !angle.finite() {
            return Err(Error::NonFinite("rotation angle"));
        }
        Ok(Self::rot_y_unchecked(angle))
    }

    pub(crate) fn rot_z_unchecked(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self(Matrix3::new(c, -s, z, s, c, z, z, z, o))
    }

    pub(crate) fn rot_y_unchecked(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self(Matrix3::new(c, z, s, z, o, z, -s, z, c))
    }

    /// Rotation by `|v|` radians about `v / |v|` (Rodrigues).
    pub fn from_rotation_vector(v: &Vector3<T>) -> Self {
        let angle = v.norm();
        if angle <= T::default_epsilon() {
            return Self(Matrix3::identity() + skew(v));
        }
        let k = skew(&(v / angle));
        let (s, c) = angle.sin_cos();
        Self(Matrix3::identity() + k * s + k * k * (T::one() - c))
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn apply(&self, v: &Vector3<T>) -> Vector3<T> {
        self.0 * v
    }

    /// Third column, i.e. the z axis of the rotated frame.
    pub fn z_axis(&self) -> Vector3<T> {
        self.0.column(2).into_owned()
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthonormality_error(&self) -> T {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }
}

impl<T: Real> std::ops::Mul for Rotation<T> {
    type Output = Rotation<T>;

    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

/// Skew-symmetric matrix with `skew(v) * w == v.cross(w)`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// Rigid transform: `x ↦ rotation · x + position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct Pose<T: Real> {
    pub rotation: Rotation<T>,
    pub position: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Rotation<T>, position: Vector3<T>) -> Self {
        Self { rotation, position }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn translate_z(d: T) -> Self {
        Self::new(Rotation::identity(), Vector3::new(T::zero(), T::zero(), d))
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            position: self.rotation.apply(&other.position) + self.position,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            position: -rt.apply(&self.position),
            rotation: rt,
        }
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.apply(p) + self.position
    }

    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation.apply(v)
    }

    /// Unit tangent of the frame (its z axis).
    pub fn tangent(&self) -> Vector3<T> {
        self.rotation.z_axis()
    }
}

impl<T: Real> std::ops::Mul for Pose<T> {
    type Output = Pose<T>;

    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

/// Free-function form of [`Pose::compose`].
pub fn compose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    a.compose(b)
}

pub fn translate_z<T: Real>(d: T) -> Pose<T> {
    Pose::translate_z(d)
}

pub fn rot_z<T: Real>(angle: T) -> Result<Rotation<T>> {
    Rotation::rot_z(angle)
}

pub fn rot_y<T: Real>(angle: T) -> Result<Rotation<T>> {
    Rotation::rot_y(angle)
}
