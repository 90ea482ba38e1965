//! Handle commands to robot shape.
//!
//! `q = [delta1, beta1, gamma1, delta2, beta2, gamma2]` holds the axial
//! rotation, insertion and knob angle of the sheath (1) and catheter (2)
//! handles. The knob angle maps linearly onto the bend angle, and the sheath
//! bend leaks into the catheter bend through a `cos(delta1 - delta2)` coupling.

mod calibrate;

pub use calibrate::{
    calibrate, fit_length_offset, parse_samples, CalibrationReport, CalibrationSample,
};

use nalgebra::{Matrix6, RowVector6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kinematics::ConfigPsi;
use crate::scalar::Real;

/// Handle command vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct ActuationQ<T: Real> {
    pub delta1: T,
    pub beta1: T,
    pub gamma1: T,
    pub delta2: T,
    pub beta2: T,
    pub gamma2: T,
}

impl<T: Real> ActuationQ<T> {
    pub fn new(delta1: T, beta1: T, gamma1: T, delta2: T, beta2: T, gamma2: T) -> Self {
        Self {
            delta1,
            beta1,
            gamma1,
            delta2,
            beta2,
            gamma2,
        }
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.delta1,
            self.beta1,
            self.gamma1,
            self.delta2,
            self.beta2,
            self.gamma2,
        )
    }
}

/// Indices of the rotary axes in `q` (axial rotations and knobs).
pub const ROTARY_AXES: [usize; 4] = [0, 2, 3, 5];

/// How the straight middle-segment length depends on the commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub enum StraightSegment<T: Real> {
    /// `Ln` constant, mm.
    Fixed { length: T },
    /// `Ln = offset + beta2 - beta1`, mm.
    Coupled { offset: T },
}

/// Box limits on the handle commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct ActuationLimits<T: Real> {
    /// `|delta_i| <= delta_max`, rad.
    pub delta_max: T,
    /// `beta_min <= beta_i <= beta_max`, mm.
    pub beta_min: T,
    pub beta_max: T,
    /// `|gamma_i| <= gamma_max`, rad.
    pub gamma_max: T,
}

impl<T: Real> ActuationLimits<T> {
    fn bounds(&self) -> (Vector6<T>, Vector6<T>) {
        let hi = Vector6::new(
            self.delta_max,
            self.beta_max,
            self.gamma_max,
            self.delta_max,
            self.beta_max,
            self.gamma_max,
        );
        let lo = Vector6::new(
            -self.delta_max,
            self.beta_min,
            -self.gamma_max,
            -self.delta_max,
            self.beta_min,
            -self.gamma_max,
        );
        (lo, hi)
    }

    pub fn contains(&self, q: &ActuationQ<T>) -> bool {
        let (lo, hi) = self.bounds();
        let v = q.to_vector();
        (0..6).all(|i| v[i] >= lo[i] && v[i] <= hi[i])
    }

    /// Clips `q` into the box; the flag is true iff some component moved.
    pub fn clip(&self, q: &ActuationQ<T>) -> (ActuationQ<T>, bool) {
        let (lo, hi) = self.bounds();
        let mut v = q.to_vector();
        let mut clipped = false;
        for i in 0..6 {
            let c = v[i].clamp(lo[i], hi[i]);
            clipped |= c != v[i];
            v[i] = c;
        }
        (ActuationQ::from_vector(&v), clipped)
    }
}

impl Default for ActuationLimits<f64> {
    fn default() -> Self {
        Self {
            delta_max: 2.0 * std::f64::consts::PI,
            beta_min: 0.0,
            beta_max: 50.0,
            gamma_max: 6.0,
        }
    }
}

/// Parameters of the command-to-shape map and the tendon routing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct ActuationParams<T: Real> {
    /// Bend gains, rad of bend per rad of knob.
    pub k1: T,
    pub k2: T,
    /// Fraction of the sheath bend transmitted to the catheter bend.
    pub kc: T,
    /// Arc length at zero insertion, mm.
    pub b1: T,
    pub b2: T,
    /// Tendon offset radii from the centreline, mm.
    pub r1: T,
    pub r2: T,
    pub straight: StraightSegment<T>,
    pub limits: ActuationLimits<T>,
    /// Largest admissible `|theta_i|`, rad.
    pub theta_max: T,
}

impl Default for ActuationParams<f64> {
    fn default() -> Self {
        Self {
            k1: 0.5,
            k2: 0.4,
            kc: 0.15,
            b1: 60.0,
            b2: 35.0,
            r1: 1.5,
            r2: 1.0,
            straight: StraightSegment::Coupled { offset: 10.0 },
            limits: ActuationLimits::default(),
            theta_max: std::f64::consts::PI,
        }
    }
}

impl<T: Real> ActuationParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.k1,
            self.k2,
            self.kc,
            self.b1,
            self.b2,
            self.r1,
            self.r2,
            self.theta_max,
        ];
        if all.iter().any(|x| !x.finite()) {
            return Err(invalid("actuation params", "all values must be finite"));
        }
        if self.k1 <= T::zero() || self.k2 <= T::zero() {
            return Err(invalid("k1/k2", "bend gains must be positive"));
        }
        if self.b1 < T::zero() || self.b2 < T::zero() {
            return Err(invalid("b1/b2", "length offsets must be >= 0"));
        }
        if self.r1 <= T::zero() || self.r2 <= T::zero() {
            return Err(invalid("r1/r2", "tendon radii must be positive"));
        }
        if self.theta_max <= T::zero() || self.theta_max > T::pi() {
            return Err(invalid("theta_max", "must lie in (0, pi]"));
        }
        let l = &self.limits;
        if l.beta_min > l.beta_max || l.gamma_max < T::zero() || l.delta_max < T::zero() {
            return Err(invalid("limits", "empty command box"));
        }
        match self.straight {
            StraightSegment::Fixed { length } if length < T::zero() => {
                Err(invalid("straight.length", "must be >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Straight middle-segment length `Ln` for the command `q`. In coupled
    /// mode a catheter pulled back past the sheath end leaves `Ln = 0`.
    pub fn straight_length(&self, q: &ActuationQ<T>) -> T {
        match self.straight {
            StraightSegment::Fixed { length } => length,
            StraightSegment::Coupled { offset } => (offset + q.beta2 - q.beta1).max(T::zero()),
        }
    }

    /// `dLn/dq` as a row over `q`.
    pub fn straight_length_gradient(&self, q: &ActuationQ<T>) -> RowVector6<T> {
        let z = T::zero();
        match self.straight {
            StraightSegment::Coupled { offset } if offset + q.beta2 - q.beta1 > z => {
                RowVector6::new(z, -T::one(), z, z, T::one(), z)
            }
            _ => RowVector6::zeros(),
        }
    }
}

/// Shape produced by command `q`.
pub fn actuation_to_shape<T: Real>(
    q: &ActuationQ<T>,
    params: &ActuationParams<T>,
) -> Result<ConfigPsi<T>> {
    let theta1 = params.k1 * q.gamma1;
    let theta2 = params.k2 * q.gamma2 + params.kc * theta1 * (q.delta1 - q.delta2).cos();
    let psi = ConfigPsi::new(
        theta1,
        q.beta1 + params.b1,
        q.delta1,
        theta2,
        q.beta2 + params.b2,
        q.delta2,
    )?;
    psi.validate(params.theta_max)?;
    Ok(psi)
}

/// Inverts [`actuation_to_shape`]. Axial rotations come back wrapped into `(-pi, pi]`.
pub fn shape_to_actuation<T: Real>(
    psi: &ConfigPsi<T>,
    params: &ActuationParams<T>,
) -> ActuationQ<T> {
    let gamma1 = psi.theta1 / params.k1;
    let gamma2 =
        (psi.theta2 - params.kc * psi.theta1 * (psi.delta1 - psi.delta2).cos()) / params.k2;
    ActuationQ::new(
        psi.delta1,
        psi.l1 - params.b1,
        gamma1,
        psi.delta2,
        psi.l2 - params.b2,
        gamma2,
    )
}

/// Exact derivative `dPsi/dq`, rows `[theta1, L1, delta1, theta2, L2, delta2]`.
pub fn actuation_jacobian<T: Real>(q: &ActuationQ<T>, params: &ActuationParams<T>) -> Matrix6<T> {
    let (sd, cd) = (q.delta1 - q.delta2).sin_cos();
    let theta1 = params.k1 * q.gamma1;
    let one = T::one();
    let mut j = Matrix6::zeros();
    j[(0, 2)] = params.k1;
    j[(1, 1)] = one;
    j[(2, 0)] = one;
    j[(3, 0)] = -params.kc * theta1 * sd;
    j[(3, 2)] = params.kc * params.k1 * cd;
    j[(3, 3)] = params.kc * theta1 * sd;
    j[(3, 5)] = params.k2;
    j[(4, 4)] = one;
    j[(5, 3)] = one;
    j
}

/// Tendon displacements implied by a shape, mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TendonDisplacement<T> {
    /// `L1 - l1 = r1 theta1`.
    pub sheath: T,
    /// `L2 - l2 = r2 theta2`.
    pub catheter: T,
    /// Catheter tendon shortening inside the bent sheath, `r2 theta1 cos(delta1 - delta2)`.
    pub coupled: T,
}

pub fn tendon_displacement<T: Real>(
    psi: &ConfigPsi<T>,
    params: &ActuationParams<T>,
) -> TendonDisplacement<T> {
    TendonDisplacement {
        sheath: params.r1 * psi.theta1,
        catheter: params.r2 * psi.theta2,
        coupled: params.r2 * psi.theta1 * (psi.delta1 - psi.delta2).cos(),
    }
}
