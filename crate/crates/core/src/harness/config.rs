//! Experiment configuration file (TOML).
//!
//! Every key has a default, so an empty file describes the reference
//! experiment. Unknown keys are rejected.

use std::path::PathBuf;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::path::PathSpec;
use crate::actuation::{ActuationLimits, ActuationParams, ActuationQ, StraightSegment};
use crate::controller::{ControlConfig, RateLimits, Scheme};
use crate::error::{invalid, Error, Result};
use crate::estimator::{FitBounds, FitConfig, FitWeights};
use crate::kinematics::RobotGeometry;
use crate::plant::PlantConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Plant RNG seed, shared by every scheme of a run.
    pub seed: u64,
    pub robot: RobotSection,
    pub plant: PlantSection,
    pub control: ControlSection,
    pub path: PathSpec,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            robot: RobotSection::default(),
            plant: PlantSection::default(),
            control: ControlSection::default(),
            path: PathSpec::default(),
            output: OutputSection::default(),
        }
    }
}

/// The controller's model of the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSection {
    pub k1: f64,
    pub k2: f64,
    pub kc: f64,
    /// mm
    pub b1: f64,
    pub b2: f64,
    /// mm
    pub r1: f64,
    pub r2: f64,
    /// rad
    pub theta_max: f64,
    pub straight: StraightSegment<f64>,
    /// mm, measured back from each segment's end
    pub coil_offsets: [f64; 2],
    /// Command the robot starts from: `[delta1, beta1, gamma1, delta2, beta2, gamma2]`.
    pub home_q: [f64; 6],
    pub limits: LimitsSection,
}

impl Default for RobotSection {
    fn default() -> Self {
        let p = ActuationParams::default();
        Self {
            k1: p.k1,
            k2: p.k2,
            kc: p.kc,
            b1: p.b1,
            b2: p.b2,
            r1: p.r1,
            r2: p.r2,
            theta_max: p.theta_max,
            straight: p.straight,
            coil_offsets: [0.0, 0.0],
            home_q: [0.0, 10.0, 0.0, 0.0, 10.0, 0.0],
            limits: LimitsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    /// rad
    pub delta_max: f64,
    /// mm
    pub beta_min: f64,
    pub beta_max: f64,
    /// rad
    pub gamma_max: f64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        let l = ActuationLimits::default();
        Self {
            delta_max: l.delta_max,
            beta_min: l.beta_min,
            beta_max: l.beta_max,
            gamma_max: l.gamma_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantProfile {
    /// Parameter mismatch, backlash, curvature distortion and sensor noise.
    PaperLike,
    /// The plant is the model; every mismatch knob is zero.
    Matched,
}

/// Ground-truth plant. Unset keys take the value of `profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub profile: PlantProfile,
    /// True gain = model gain × scale.
    pub k1_scale: Option<f64>,
    pub k2_scale: Option<f64>,
    pub kc_scale: Option<f64>,
    /// True length offset = model offset + delta, mm.
    pub b1_delta: Option<f64>,
    pub b2_delta: Option<f64>,
    /// Added to the straight-segment offset (or fixed length), mm.
    pub straight_delta: Option<f64>,
    /// rad
    pub backlash_width: Option<f64>,
    /// mm
    pub sensor_noise_sigma_pos: Option<f64>,
    /// rad
    pub sensor_noise_sigma_tangent: Option<f64>,
    pub curvature_distortion: Option<f64>,
    /// mm
    pub registration_translation: Option<[f64; 3]>,
    /// rotation vector, rad
    pub registration_rotation: Option<[f64; 3]>,
    /// s
    pub sample_period: Option<f64>,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            profile: PlantProfile::PaperLike,
            k1_scale: None,
            k2_scale: None,
            kc_scale: None,
            b1_delta: None,
            b2_delta: None,
            straight_delta: None,
            backlash_width: None,
            sensor_noise_sigma_pos: None,
            sensor_noise_sigma_tangent: None,
            curvature_distortion: None,
            registration_translation: None,
            registration_rotation: None,
            sample_period: None,
        }
    }
}

/// Values a profile assigns to every plant knob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantKnobs {
    pub k1_scale: f64,
    pub k2_scale: f64,
    pub kc_scale: f64,
    pub b1_delta: f64,
    pub b2_delta: f64,
    pub straight_delta: f64,
    pub backlash_width: f64,
    pub sensor_noise_sigma_pos: f64,
    pub sensor_noise_sigma_tangent: f64,
    pub curvature_distortion: f64,
    pub registration_translation: [f64; 3],
    pub registration_rotation: [f64; 3],
    pub sample_period: f64,
}

impl PlantProfile {
    pub fn knobs(self) -> PlantKnobs {
        let matched = PlantKnobs {
            k1_scale: 1.0,
            k2_scale: 1.0,
            kc_scale: 1.0,
            b1_delta: 0.0,
            b2_delta: 0.0,
            straight_delta: 0.0,
            backlash_width: 0.0,
            sensor_noise_sigma_pos: 0.0,
            sensor_noise_sigma_tangent: 0.0,
            curvature_distortion: 0.0,
            registration_translation: [0.0; 3],
            registration_rotation: [0.0; 3],
            sample_period: 1.0 / 30.0,
        };
        match self {
            PlantProfile::Matched => matched,
            PlantProfile::PaperLike => PlantKnobs {
                k1_scale: 0.92,
                k2_scale: 1.10,
                kc_scale: 1.10,
                b1_delta: -3.0,
                b2_delta: 3.0,
                backlash_width: 0.04,
                sensor_noise_sigma_pos: 0.2,
                sensor_noise_sigma_tangent: 0.01,
                curvature_distortion: 0.15,
                ..matched
            },
        }
    }
}

impl PlantSection {
    pub fn knobs(&self) -> PlantKnobs {
        let b = self.profile.knobs();
        PlantKnobs {
            k1_scale: self.k1_scale.unwrap_or(b.k1_scale),
            k2_scale: self.k2_scale.unwrap_or(b.k2_scale),
            kc_scale: self.kc_scale.unwrap_or(b.kc_scale),
            b1_delta: self.b1_delta.unwrap_or(b.b1_delta),
            b2_delta: self.b2_delta.unwrap_or(b.b2_delta),
            straight_delta: self.straight_delta.unwrap_or(b.straight_delta),
            backlash_width: self.backlash_width.unwrap_or(b.backlash_width),
            sensor_noise_sigma_pos: self
                .sensor_noise_sigma_pos
                .unwrap_or(b.sensor_noise_sigma_pos),
            sensor_noise_sigma_tangent: self
                .sensor_noise_sigma_tangent
                .unwrap_or(b.sensor_noise_sigma_tangent),
            curvature_distortion: self.curvature_distortion.unwrap_or(b.curvature_distortion),
            registration_translation: self
                .registration_translation
                .unwrap_or(b.registration_translation),
            registration_rotation: self
                .registration_rotation
                .unwrap_or(b.registration_rotation),
            sample_period: self.sample_period.unwrap_or(b.sample_period),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub alpha: f64,
    /// Pseudo-inverse damping, mm.
    pub lambda: f64,
    /// mm
    pub convergence_threshold: f64,
    pub max_cycles_per_target: usize,
    /// Schemes to run, in order.
    pub schemes: Vec<Scheme>,
    pub rate_limits: RateLimitsSection,
    pub fit: FitSection,
}

impl Default for ControlSection {
    fn default() -> Self {
        let c = ControlConfig::default();
        Self {
            alpha: c.alpha,
            lambda: c.lambda,
            convergence_threshold: c.convergence_threshold,
            max_cycles_per_target: c.max_cycles_per_target,
            schemes: Scheme::ALL.to_vec(),
            rate_limits: RateLimitsSection::default(),
            fit: FitSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLimitsSection {
    /// rad per cycle
    pub delta: f64,
    /// mm per cycle
    pub beta: f64,
    /// rad per cycle
    pub gamma: f64,
}

impl Default for RateLimitsSection {
    fn default() -> Self {
        let r = RateLimits::default();
        Self {
            delta: r.delta,
            beta: r.beta,
            gamma: r.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// mm⁻²
    pub w_position_sheath: f64,
    pub w_tangent_sheath: f64,
    /// mm⁻²
    pub w_position_catheter: f64,
    pub w_tangent_catheter: f64,
    /// rad
    pub theta_max: f64,
    /// mm
    pub length_min: f64,
    pub length_max: f64,
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub residual_tolerance: f64,
    pub max_residual: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            w_position_sheath: f.weights.position_sheath,
            w_tangent_sheath: f.weights.tangent_sheath,
            w_position_catheter: f.weights.position_catheter,
            w_tangent_catheter: f.weights.tangent_catheter,
            theta_max: f.bounds.theta_max,
            length_min: f.bounds.length_min,
            length_max: f.bounds.length_max,
            max_iterations: f.max_iterations,
            step_tolerance: f.step_tolerance,
            residual_tolerance: f.residual_tolerance,
            max_residual: f.max_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Environment variable that overrides `output.dir`.
pub const OUT_DIR_ENV: &str = "CCR_OUT_DIR";

impl ExperimentConfig {
    /// Parses and validates a configuration file's contents.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_params()?;
        self.geometry()?;
        let q = self.home_q();
        if !self.model_params()?.limits.contains(&q) {
            return Err(invalid("robot.home_q", "outside the actuator limits"));
        }
        self.plant_config()?;
        self.control_config(Scheme::ClosedLoop)?;
        if self.control.schemes.is_empty() {
            return Err(invalid(
                "control.schemes",
                "at least one scheme is required",
            ));
        }
        self.path.validate()
    }

    pub fn model_params(&self) -> Result<ActuationParams<f64>> {
        let r = &self.robot;
        let p = ActuationParams {
            k1: r.k1,
            k2: r.k2,
            kc: r.kc,
            b1: r.b1,
            b2: r.b2,
            r1: r.r1,
            r2: r.r2,
            straight: r.straight,
            limits: ActuationLimits {
                delta_max: r.limits.delta_max,
                beta_min: r.limits.beta_min,
                beta_max: r.limits.beta_max,
                gamma_max: r.limits.gamma_max,
            },
            theta_max: r.theta_max,
        };
        p.validate().map_err(|e| prefixed("robot", e))?;
        Ok(p)
    }

    /// Geometry with the straight length evaluated at the home command.
    pub fn geometry(&self) -> Result<RobotGeometry<f64>> {
        let p = self.model_params()?;
        RobotGeometry::new(p.straight_length(&self.home_q()), self.robot.coil_offsets)
            .map_err(|e| prefixed("robot", e))
    }

    pub fn home_q(&self) -> ActuationQ<f64> {
        ActuationQ::from_vector(&Vector6::from(self.robot.home_q))
    }

    pub fn plant_config(&self) -> Result<PlantConfig> {
        let model = self.model_params()?;
        let k = self.plant.knobs();
        let straight = match model.straight {
            StraightSegment::Fixed { length } => StraightSegment::Fixed {
                length: length + k.straight_delta,
            },
            StraightSegment::Coupled { offset } => StraightSegment::Coupled {
                offset: offset + k.straight_delta,
            },
        };
        let cfg = PlantConfig {
            true_params: ActuationParams {
                k1: model.k1 * k.k1_scale,
                k2: model.k2 * k.k2_scale,
                kc: model.kc * k.kc_scale,
                b1: model.b1 + k.b1_delta,
                b2: model.b2 + k.b2_delta,
                straight,
                ..model
            },
            coil_offsets: self.robot.coil_offsets,
            backlash_width: k.backlash_width,
            sensor_noise_sigma_pos: k.sensor_noise_sigma_pos,
            sensor_noise_sigma_tangent: k.sensor_noise_sigma_tangent,
            curvature_distortion: k.curvature_distortion,
            registration_translation: k.registration_translation,
            registration_rotation: k.registration_rotation,
            rng_seed: self.seed,
            sample_period: k.sample_period,
        };
        cfg.validate().map_err(|e| prefixed("plant", e))?;
        Ok(cfg)
    }

    pub fn control_config(&self, scheme: Scheme) -> Result<ControlConfig<f64>> {
        let c = &self.control;
        let f = &c.fit;
        let cfg = ControlConfig {
            alpha: c.alpha,
            lambda: c.lambda,
            convergence_threshold: c.convergence_threshold,
            max_cycles_per_target: c.max_cycles_per_target,
            scheme,
            rate_limits: RateLimits {
                delta: c.rate_limits.delta,
                beta: c.rate_limits.beta,
                gamma: c.rate_limits.gamma,
            },
            fit: FitConfig {
                weights: FitWeights {
                    position_sheath: f.w_position_sheath,
                    tangent_sheath: f.w_tangent_sheath,
                    position_catheter: f.w_position_catheter,
                    tangent_catheter: f.w_tangent_catheter,
                },
                bounds: FitBounds {
                    theta_max: f.theta_max,
                    length_min: f.length_min,
                    length_max: f.length_max,
                },
                max_iterations: f.max_iterations,
                step_tolerance: f.step_tolerance,
                residual_tolerance: f.residual_tolerance,
                max_residual: f.max_residual,
            },
        };
        cfg.validate().map_err(|e| prefixed("control", e))?;
        Ok(cfg)
    }
}

fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::InvalidParameter {
            name: format!("{section}.{name}"),
            reason,
        },
        other => other,
    }
}
