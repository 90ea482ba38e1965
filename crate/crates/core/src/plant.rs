//! Simulated robot and tracker used as ground truth.
//!
//! The plant differs from the controller's model in three ways: its own
//! actuation parameters, a play (backlash) operator on every rotary axis, and
//! a two-arc curvature distortion of each segment. Readings are reported in a
//! tracker frame offset from the base by a registration error and carry
//! Gaussian noise.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::actuation::{actuation_to_shape, ActuationParams, ActuationQ, ROTARY_AXES};
use crate::controller::Plant;
use crate::error::{invalid, Error, Result};
use crate::estimator::{CoilId, CoilReading};
use crate::kinematics::{coil_fk, partial_arc, segment_fk, ConfigPsi, RobotGeometry};
use crate::transform::{Pose, Rotation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub true_params: ActuationParams<f64>,
    /// mm, sheath and catheter
    pub coil_offsets: [f64; 2],
    /// Half-width of the dead band on each rotary axis, rad.
    pub backlash_width: f64,
    /// mm
    pub sensor_noise_sigma_pos: f64,
    /// rad
    pub sensor_noise_sigma_tangent: f64,
    /// `d` in `(-1, 1)`: each segment is two equal-length arcs with curvature
    /// ratio `(1 + d) / (1 - d)` and the same total bend.
    pub curvature_distortion: f64,
    /// Tracker-from-base translation error, mm.
    pub registration_translation: [f64; 3],
    /// Tracker-from-base rotation error as a rotation vector, rad.
    pub registration_rotation: [f64; 3],
    pub rng_seed: u64,
    /// Time advanced per command, s.
    pub sample_period: f64,
}

impl PlantConfig {
    /// A plant identical to the given model: no backlash, noise, distortion or
    /// registration error.
    pub fn matched(params: ActuationParams<f64>, coil_offsets: [f64; 2], rng_seed: u64) -> Self {
        Self {
            true_params: params,
            coil_offsets,
            backlash_width: 0.0,
            sensor_noise_sigma_pos: 0.0,
            sensor_noise_sigma_tangent: 0.0,
            curvature_distortion: 0.0,
            registration_translation: [0.0; 3],
            registration_rotation: [0.0; 3],
            rng_seed,
            sample_period: 1.0 / 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.true_params.validate()?;
        RobotGeometry::new(0.0, self.coil_offsets)?;
        let nonneg = [
            ("backlash_width", self.backlash_width),
            ("sensor_noise_sigma_pos", self.sensor_noise_sigma_pos),
            (
                "sensor_noise_sigma_tangent",
                self.sensor_noise_sigma_tangent,
            ),
            ("sample_period", self.sample_period),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, "must be finite and >= 0"));
            }
        }
        if !(self.curvature_distortion.abs() < 1.0) {
            return Err(invalid("curvature_distortion", "must satisfy |d| < 1"));
        }
        Ok(())
    }
}

/// Tracker-from-base transform for a given registration error.
pub fn base_registration(translation: &Vector3<f64>, rotation: &Vector3<f64>) -> Pose<f64> {
    Pose::new(Rotation::from_rotation_vector(rotation), *translation)
}

/// Rate-independent play operator: the output follows the input only once the
/// input leaves the band `[output - width, output + width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayOperator {
    pub width: f64,
    pub output: f64,
}

impl PlayOperator {
    pub fn new(width: f64, initial: f64) -> Self {
        Self {
            width,
            output: initial,
        }
    }

    pub fn update(&mut self, input: f64) -> f64 {
        self.output = self.output.clamp(input - self.width, input + self.width);
        self.output
    }
}

/// Frame at arc length `s` along a segment split into two halves with bend
/// `theta (1 + d) / 2` and `theta (1 - d) / 2`.
pub fn distorted_segment_frame(
    theta: f64,
    length: f64,
    delta: f64,
    d: f64,
    s: f64,
) -> Result<Pose<f64>> {
    let half = 0.5 * length;
    let k_first = theta * (1.0 + d) / length;
    let k_second = theta * (1.0 - d) / length;
    if s <= half {
        return segment_fk(k_first * s, s, delta);
    }
    let first = segment_fk(k_first * half, half, delta)?;
    let rest = s - half;
    Ok(first.compose(&segment_fk(k_second * rest, rest, delta)?))
}

pub struct SimPlant {
    cfg: PlantConfig,
    registration: Pose<f64>,
    play: [PlayOperator; 4],
    commanded: ActuationQ<f64>,
    effective: ActuationQ<f64>,
    psi: ConfigPsi<f64>,
    history: Vec<ActuationQ<f64>>,
    rng: ChaCha8Rng,
    time: f64,
}

impl SimPlant {
    /// Starts the plant settled at `q0` (no pending backlash).
    pub fn new(cfg: PlantConfig, q0: ActuationQ<f64>) -> Result<Self> {
        cfg.validate()?;
        check_limits(&cfg, &q0)?;
        let v = q0.to_vector();
        let play = ROTARY_AXES.map(|i| PlayOperator::new(cfg.backlash_width, v[i]));
        let psi = actuation_to_shape(&q0, &cfg.true_params).map_err(fault)?;
        Ok(Self {
            registration: base_registration(
                &Vector3::from(cfg.registration_translation),
                &Vector3::from(cfg.registration_rotation),
            ),
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
            play,
            commanded: q0,
            effective: q0,
            psi,
            history: vec![q0],
            time: 0.0,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn commanded(&self) -> &ActuationQ<f64> {
        &self.commanded
    }

    /// Command after the backlash operators.
    pub fn effective(&self) -> &ActuationQ<f64> {
        &self.effective
    }

    /// True constant-curvature-equivalent shape (before distortion).
    pub fn true_psi(&self) -> &ConfigPsi<f64> {
        &self.psi
    }

    pub fn history(&self) -> &[ActuationQ<f64>] {
        &self.history
    }

    fn geometry(&self) -> RobotGeometry<f64> {
        RobotGeometry {
            straight_length: self.cfg.true_params.straight_length(&self.effective),
            coil_offsets: self.cfg.coil_offsets,
        }
    }

    /// Noise-free coil frames in the robot base frame.
    pub fn true_coil_poses(&self) -> Result<(Pose<f64>, Pose<f64>)> {
        let geom = self.geometry();
        let d = self.cfg.curvature_distortion;
        if d == 0.0 {
            return coil_fk(&self.psi, &geom);
        }
        let p = &self.psi;
        let [o1, o2] = geom.coil_offsets;
        let (_, s1) = partial_arc(p.theta1, p.l1, o1)?;
        let (_, s2) = partial_arc(p.theta2, p.l2, o2)?;
        let coil1 = distorted_segment_frame(p.theta1, p.l1, p.delta1, d, s1)?;
        let seg1 = distorted_segment_frame(p.theta1, p.l1, p.delta1, d, p.l1)?;
        let coil2 = seg1
            .compose(&Pose::translate_z(geom.straight_length))
            .compose(&distorted_segment_frame(p.theta2, p.l2, p.delta2, d, s2)?);
        Ok((coil1, coil2))
    }

    fn sense(&mut self, coil: CoilId, pose: &Pose<f64>) -> CoilReading<f64> {
        let mut position = self.registration.transform_point(&pose.position);
        let mut tangent = self.registration.transform_vector(&pose.tangent());
        let sp = self.cfg.sensor_noise_sigma_pos;
        if sp > 0.0 {
            let n = Normal::new(0.0, sp).expect("validated sigma");
            position += Vector3::from_fn(|_, _| n.sample(&mut self.rng));
        }
        let st = self.cfg.sensor_noise_sigma_tangent;
        if st > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            let angle = st * z;
            let axis = loop {
                let u = Vector3::<f64>::from_fn(|_, _| self.rng.random_range(-1.0..1.0));
                let perp = u - tangent * u.dot(&tangent);
                if perp.norm() > 1e-3 {
                    break perp.normalize();
                }
            };
            tangent = tangent * angle.cos() + axis.cross(&tangent) * angle.sin();
        }
        CoilReading::new(coil, position, tangent, self.time)
    }
}

fn fault(e: Error) -> Error {
    match e {
        Error::PlantFault(_) => e,
        other => Error::PlantFault(other.to_string()),
    }
}

fn check_limits(cfg: &PlantConfig, q: &ActuationQ<f64>) -> Result<()> {
    if !q.to_vector().iter().all(|x| x.is_finite()) || !cfg.true_params.limits.contains(q) {
        return Err(Error::PlantFault(format!(
            "command outside actuator range: {:?}",
            q
        )));
    }
    Ok(())
}

impl Plant<f64> for SimPlant {
    fn command(&mut self, q: &ActuationQ<f64>) -> Result<()> {
        check_limits(&self.cfg, q)?;
        let mut v = q.to_vector();
        for (op, &axis) in self.play.iter_mut().zip(ROTARY_AXES.iter()) {
            v[axis] = op.update(v[axis]);
        }
        let effective = ActuationQ::from_vector(&v);
        self.psi = actuation_to_shape(&effective, &self.cfg.true_params).map_err(fault)?;
        self.effective = effective;
        self.commanded = *q;
        self.history.push(*q);
        self.time += self.cfg.sample_period;
        Ok(())
    }

    fn read_coils(&mut self) -> Result<(CoilReading<f64>, CoilReading<f64>)> {
        let (p1, p2) = self.true_coil_poses().map_err(fault)?;
        let a = self.sense(CoilId::Sheath, &p1);
        let b = self.sense(CoilId::Catheter, &p2);
        Ok((a, b))
    }
}
