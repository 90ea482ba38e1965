//! Resolved-rates position control of the catheter coil.
//!
//! Each cycle reads the coils, updates the shape estimate according to the
//! selected [`Scheme`], and commands `q + α J† (p_target - p̄)` with the
//! increment rate-limited and the result clipped to the command box.

use std::fmt;
use std::str::FromStr;
use std::sync::mpsc::Sender;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::actuation::{actuation_to_shape, ActuationParams, ActuationQ};
use crate::error::{invalid, Error, Result};
use crate::estimator::{CoilReading, FitConfig, ShapeEstimator};
use crate::jacobians::{control_jacobian, damped_pinv};
use crate::kinematics::{coil_fk, ConfigPsi, RobotGeometry};
use crate::scalar::Real;

/// Command/read interface of the robot, simulated or real.
///
/// A hardware adapter implements the same two calls: `command` moves the
/// handles to `q`, `read_coils` returns the latest (sheath, catheter) samples
/// in the robot base frame as seen through the assumed registration.
pub trait Plant<T: Real> {
    fn command(&mut self, q: &ActuationQ<T>) -> Result<()>;
    fn read_coils(&mut self) -> Result<(CoilReading<T>, CoilReading<T>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Feedback and shape both from the model; sensors are only logged.
    OpenLoop,
    /// Sensed tip feedback, model shape.
    ClosedLoop,
    /// Sensed tip feedback, shape fitted to the coil readings.
    ClosedLoopFit,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::OpenLoop, Scheme::ClosedLoop, Scheme::ClosedLoopFit];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::OpenLoop => "open_loop",
            Scheme::ClosedLoop => "closed_loop",
            Scheme::ClosedLoopFit => "closed_loop_fit",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme `{s}`")))
    }
}

/// Largest change of each command per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct RateLimits<T: Real> {
    /// rad
    pub delta: T,
    /// mm
    pub beta: T,
    /// rad
    pub gamma: T,
}

impl Default for RateLimits<f64> {
    fn default() -> Self {
        Self {
            delta: 0.3,
            beta: 5.0,
            gamma: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct ControlConfig<T: Real> {
    pub alpha: T,
    /// Damping of the pseudo-inverse.
    pub lambda: T,
    /// mm
    pub convergence_threshold: T,
    pub max_cycles_per_target: usize,
    pub scheme: Scheme,
    pub rate_limits: RateLimits<T>,
    pub fit: FitConfig<T>,
}

impl Default for ControlConfig<f64> {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 1e-2,
            convergence_threshold: 1.0,
            max_cycles_per_target: 20,
            scheme: Scheme::ClosedLoopFit,
            rate_limits: RateLimits::default(),
            fit: FitConfig::default(),
        }
    }
}

impl<T: Real> ControlConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return Err(invalid("alpha", "must lie in (0, 1]"));
        }
        if !(self.lambda >= T::zero()) {
            return Err(invalid("lambda", "must be >= 0"));
        }
        if !(self.convergence_threshold > T::zero()) {
            return Err(invalid("convergence_threshold", "must be > 0"));
        }
        if self.max_cycles_per_target == 0 {
            return Err(invalid("max_cycles_per_target", "must be >= 1"));
        }
        let r = &self.rate_limits;
        if !(r.delta > T::zero() && r.beta > T::zero() && r.gamma > T::zero()) {
            return Err(invalid("rate_limits", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T: Real> {
    /// `α J† e` before any limiting.
    pub raw: Vector6<T>,
    /// Increment actually applied, `q_next - q`.
    pub applied: Vector6<T>,
    pub q_next: ActuationQ<T>,
    pub rate_limited: bool,
    /// Some component of `q` hit the command box.
    pub saturated: bool,
}

/// One resolved-rates update `Δq = α J†(psi, q) (target - tip_feedback)`.
pub fn resolved_rates_step<T: Real>(
    target: &Vector3<T>,
    tip_feedback: &Vector3<T>,
    psi: &ConfigPsi<T>,
    q: &ActuationQ<T>,
    cfg: &ControlConfig<T>,
    params: &ActuationParams<T>,
    geom: &RobotGeometry<T>,
) -> Result<StepOutcome<T>> {
    let error = target - tip_feedback;
    if !error.iter().all(|x| x.finite()) {
        return Err(Error::NonFinite("tracking error"));
    }
    let jac = control_jacobian(psi, q, params, geom)?;
    let raw = damped_pinv(&jac.j, cfg.lambda)? * error * cfg.alpha;

    let rl = &cfg.rate_limits;
    let caps = [rl.delta, rl.beta, rl.gamma, rl.delta, rl.beta, rl.gamma];
    let mut limited = raw;
    let mut rate_limited = false;
    for (i, cap) in caps.iter().enumerate() {
        let c = limited[i].clamp(-*cap, *cap);
        rate_limited |= c != limited[i];
        limited[i] = c;
    }
    let (q_next, saturated) = params
        .limits
        .clip(&ActuationQ::from_vector(&(q.to_vector() + limited)));
    Ok(StepOutcome {
        raw,
        applied: q_next.to_vector() - q.to_vector(),
        q_next,
        rate_limited,
        saturated,
    })
}

/// One control cycle: a read, and the command that followed it (if any).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct CycleLog<T: Real> {
    pub scheme: Scheme,
    pub waypoint: usize,
    pub cycle: usize,
    pub target: Vector3<T>,
    /// Catheter coil position as reported by the sensor.
    pub measured_tip: Vector3<T>,
    /// Catheter coil position predicted from the shape estimate.
    pub model_tip: Vector3<T>,
    /// Norm of `target - feedback` used by the control law.
    pub feedback_error: T,
    pub psi: ConfigPsi<T>,
    /// Command in force when the coils were read.
    pub q: ActuationQ<T>,
    pub converged: bool,
    /// Whether a command was issued after this read.
    pub commanded: bool,
    pub saturated: bool,
    /// `Some(accepted)` when a shape fit ran this cycle.
    pub fit_accepted: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutcome<T: Real> {
    pub waypoint: usize,
    pub converged: bool,
    /// Commands issued for this target.
    pub cycles_used: usize,
    pub final_measured_tip: Vector3<T>,
}

/// Single-owner control loop state.
pub struct Controller<T: Real> {
    cfg: ControlConfig<T>,
    params: ActuationParams<T>,
    geometry: RobotGeometry<T>,
    q: ActuationQ<T>,
    estimator: ShapeEstimator<T>,
    logs: Vec<CycleLog<T>>,
    sink: Option<Sender<CycleLog<T>>>,
}

impl<T: Real> Controller<T> {
    /// `q0` must be the command the plant currently holds.
    pub fn new(
        cfg: ControlConfig<T>,
        params: ActuationParams<T>,
        geometry: RobotGeometry<T>,
        q0: ActuationQ<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        geometry.validate()?;
        let psi0 = actuation_to_shape(&q0, &params)?;
        Ok(Self {
            estimator: ShapeEstimator::new(cfg.fit, psi0),
            cfg,
            params,
            geometry,
            q: q0,
            logs: Vec::new(),
            sink: None,
        })
    }

    /// Streams every cycle record to `tx` in addition to the internal log.
    pub fn with_log_sink(mut self, tx: Sender<CycleLog<T>>) -> Self {
        self.sink = Some(tx);
        self
    }

    pub fn q(&self) -> &ActuationQ<T> {
        &self.q
    }

    pub fn config(&self) -> &ControlConfig<T> {
        &self.cfg
    }

    pub fn logs(&self) -> &[CycleLog<T>] {
        &self.logs
    }

    pub fn into_logs(self) -> Vec<CycleLog<T>> {
        self.logs
    }

    pub fn estimator(&self) -> &ShapeEstimator<T> {
        &self.estimator
    }

    fn geometry_for(&self, q: &ActuationQ<T>) -> RobotGeometry<T> {
        self.geometry
            .with_straight_length(self.params.straight_length(q))
    }

    fn record(&mut self, log: CycleLog<T>) {
        if let Some(tx) = &self.sink {
            // a dropped receiver only stops streaming
            let _ = tx.send(log.clone());
        }
        self.logs.push(log);
    }

    /// Drives the controlled point toward `target` until the feedback error
    /// drops below the threshold or the cycle budget is spent.
    pub fn track_target<P: Plant<T>>(
        &mut self,
        waypoint: usize,
        target: &Vector3<T>,
        plant: &mut P,
    ) -> Result<TrackOutcome<T>> {
        let scheme = self.cfg.scheme;
        let mut commands = 0;
        for cycle in 0..=self.cfg.max_cycles_per_target {
            let readings = plant.read_coils()?;
            let measured = readings.1.position;
            let geom = self.geometry_for(&self.q);
            let model_psi = actuation_to_shape(&self.q, &self.params)?;
            let (psi, fit_accepted) = match scheme {
                Scheme::OpenLoop | Scheme::ClosedLoop => (model_psi, None),
                Scheme::ClosedLoopFit => {
                    let before = self.estimator.rejected();
                    let psi = self.estimator.update_in_chart(
                        (&readings.0, &readings.1),
                        &geom,
                        &model_psi,
                    );
                    (psi, Some(self.estimator.rejected() == before))
                }
            };
            let model_tip = coil_fk(&psi, &geom)?.1.position;
            let feedback = match scheme {
                Scheme::OpenLoop => model_tip,
                Scheme::ClosedLoop | Scheme::ClosedLoopFit => measured,
            };
            let error = (target - feedback).norm();
            let converged = error < self.cfg.convergence_threshold;
            let last = converged || cycle == self.cfg.max_cycles_per_target;

            let step = if last {
                None
            } else {
                Some(resolved_rates_step(
                    target,
                    &feedback,
                    &psi,
                    &self.q,
                    &self.cfg,
                    &self.params,
                    &self.geometry,
                )?)
            };
            self.record(CycleLog {
                scheme,
                waypoint,
                cycle,
                target: *target,
                measured_tip: measured,
                model_tip,
                feedback_error: error,
                psi,
                q: self.q,
                converged,
                commanded: step.is_some(),
                saturated: step.map(|s| s.saturated).unwrap_or(false),
                fit_accepted,
            });
            match step {
                None => {
                    return Ok(TrackOutcome {
                        waypoint,
                        converged,
                        cycles_used: commands,
                        final_measured_tip: measured,
                    })
                }
                Some(s) => {
                    plant.command(&s.q_next)?;
                    self.q = s.q_next;
                    commands += 1;
                }
            }
        }
        unreachable!("loop always returns on its final cycle")
    }

    /// Tracks each waypoint in order without resetting state in between.
    pub fn follow_path<P: Plant<T>>(
        &mut self,
        waypoints: &[Vector3<T>],
        plant: &mut P,
    ) -> Result<Vec<TrackOutcome<T>>> {
        if waypoints.is_empty() {
            return Err(Error::Precondition("path has no waypoints".into()));
        }
        waypoints
            .iter()
            .enumerate()
            .map(|(i, w)| self.track_target(i, w, plant))
            .collect()
    }
}

/// Model-only resolved-rates iteration toward `target`, used to pre-position
/// the robot. Returns the final command and the remaining model error (mm).
pub fn solve_model_ik<T: Real>(
    target: &Vector3<T>,
    q0: &ActuationQ<T>,
    cfg: &ControlConfig<T>,
    params: &ActuationParams<T>,
    geometry: &RobotGeometry<T>,
    max_iterations: usize,
) -> Result<(ActuationQ<T>, T)> {
    let mut q = *q0;
    let mut err = T::max_value().unwrap();
    for _ in 0..max_iterations {
        let psi = actuation_to_shape(&q, params)?;
        let geom = geometry.with_straight_length(params.straight_length(&q));
        let tip = coil_fk(&psi, &geom)?.1.position;
        err = (target - tip).norm();
        if err < cfg.convergence_threshold * T::lit(1e-3) {
            break;
        }
        q = resolved_rates_step(target, &tip, &psi, &q, cfg, params, geometry)?.q_next;
    }
    Ok((q, err))
}
