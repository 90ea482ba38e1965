//! Target paths and error decomposition relative to the path plane.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Counter-clockwise when viewed from the tip of the normal.
    Ccw,
    Cw,
}

/// Circle of `n_points` evenly spaced waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSpec {
    /// mm
    pub center: [f64; 3],
    /// Unit normal of the circle plane.
    pub normal: [f64; 3],
    /// mm
    pub radius: f64,
    pub n_points: usize,
    pub direction: Direction,
    /// Angle of the first waypoint, rad, measured from the in-plane axis
    /// closest to the base x axis.
    pub phase: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        let tilt = 30f64.to_radians();
        Self {
            center: [0.0, 0.0, 95.0],
            normal: [tilt.sin(), 0.0, tilt.cos()],
            radius: 20.0,
            n_points: 72,
            direction: Direction::Ccw,
            // start at the top of the tilted circle, farthest from the base
            phase: std::f64::consts::PI,
        }
    }
}

impl PathSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(invalid("path.radius", "must be > 0"));
        }
        if self.n_points == 0 {
            return Err(invalid("path.n_points", "must be >= 1"));
        }
        let n = Vector3::from(self.normal);
        if !((n.norm() - 1.0).abs() < 1e-9) {
            return Err(invalid("path.normal", "must have unit length"));
        }
        if !self
            .center
            .iter()
            .chain([&self.phase])
            .all(|x| x.is_finite())
        {
            return Err(invalid("path.center", "must be finite"));
        }
        Ok(())
    }

    /// Orthonormal in-plane axes `(u, v)` with `u × v = normal`.
    pub fn plane_axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = Vector3::from(self.normal);
        let seed = if n.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let u = (seed - n * n.dot(&seed)).normalize();
        (u, n.cross(&u))
    }
}

pub fn generate_path(spec: &PathSpec) -> Result<Vec<Vector3<f64>>> {
    spec.validate()?;
    let c = Vector3::from(spec.center);
    let (u, v) = spec.plane_axes();
    let sign = match spec.direction {
        Direction::Ccw => 1.0,
        Direction::Cw => -1.0,
    };
    let step = std::f64::consts::TAU / spec.n_points as f64;
    Ok((0..spec.n_points)
        .map(|i| {
            let a = spec.phase + sign * step * i as f64;
            c + (u * a.cos() + v * a.sin()) * spec.radius
        })
        .collect())
}

/// Splits an error vector into `(out_of_plane, in_plane)` magnitudes.
pub fn decompose_error(error: &Vector3<f64>, normal: &Vector3<f64>) -> (f64, f64) {
    let along = error.dot(normal);
    (along.abs(), (error - normal * along).norm())
}
