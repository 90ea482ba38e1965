//! Kinematics, shape estimation and resolved-rates control for a two-segment
//! concentric tendon-driven continuum robot (deflectable sheath carrying a
//! deflectable catheter), plus a simulated plant and an experiment harness.
//!
//! Numeric code is generic over [`Real`] (`f32`/`f64`); the `*64` aliases at
//! the crate root fix the scalar to `f64`, which is what the simulator and
//! harness use.

// `!(x < y)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuation;
pub mod controller;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod jacobians;
pub mod kinematics;
pub mod plant;
pub mod scalar;
pub mod transform;

pub use actuation::{
    actuation_jacobian, actuation_to_shape, calibrate, shape_to_actuation, tendon_displacement,
    ActuationLimits, ActuationParams, ActuationQ, StraightSegment,
};
pub use controller::{resolved_rates_step, ControlConfig, Controller, CycleLog, Plant, Scheme};
pub use error::{Error, Result};
pub use estimator::{fallback_policy, fit_shape, CoilId, CoilReading, FitConfig, FitResult};
pub use jacobians::{control_jacobian, damped_pinv, robot_linear_jacobian, segment_jacobian};
pub use kinematics::{coil_fk, full_fk, segment_fk, ConfigPsi, RobotGeometry};
pub use plant::{PlantConfig, SimPlant};
pub use scalar::Real;
pub use transform::{Pose, Rotation};

pub type Pose64 = Pose<f64>;
pub type Rotation64 = Rotation<f64>;
pub type ConfigPsi64 = ConfigPsi<f64>;
pub type RobotGeometry64 = RobotGeometry<f64>;
pub type ActuationQ64 = ActuationQ<f64>;
pub type ActuationParams64 = ActuationParams<f64>;
pub type CoilReading64 = CoilReading<f64>;
pub type FitResult64 = FitResult<f64>;
pub type ControlConfig64 = ControlConfig<f64>;
pub type Controller64 = Controller<f64>;

pub type Pose32 = Pose<f32>;
pub type ConfigPsi32 = ConfigPsi<f32>;
pub type ActuationQ32 = ActuationQ<f32>;
