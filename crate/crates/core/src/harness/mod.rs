//! Experiment runner: path following with each control scheme against the
//! simulated plant, and report/log writers.

mod config;
mod output;
mod path;
mod report;

pub use config::{
    ControlSection, ExperimentConfig, FitSection, LimitsSection, OutputSection, PlantKnobs,
    PlantProfile, PlantSection, RateLimitsSection, RobotSection, OUT_DIR_ENV,
};
pub use output::{
    cycles_csv, report_json, resolve_output_dir, round_sig, waypoints_csv, write_outputs,
};
pub use path::{decompose_error, generate_path, Direction, PathSpec};
pub use report::{Aggregates, PathReport, SchemeReport, WaypointReport};

use nalgebra::Vector3;

use crate::actuation::ActuationQ;
use crate::controller::{solve_model_ik, Controller, CycleLog, Scheme, TrackOutcome};
use crate::error::{Error, Result};
use crate::plant::SimPlant;

/// Iteration cap of the model-only solve that places the robot on the first
/// waypoint.
const PREPOSITION_ITERATIONS: usize = 500;

#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub scheme: Scheme,
    /// Command the run started from.
    pub start_q: ActuationQ<f64>,
    pub outcomes: Vec<TrackOutcome<f64>>,
    pub logs: Vec<CycleLog<f64>>,
    /// Every command the plant received, starting with `start_q`.
    pub commands: Vec<ActuationQ<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub waypoints: Vec<Vector3<f64>>,
    pub runs: Vec<SchemeRun>,
    pub report: PathReport,
}

impl ExperimentOutput {
    pub fn logs(&self) -> impl Iterator<Item = &CycleLog<f64>> {
        self.runs.iter().flat_map(|r| r.logs.iter())
    }
}

/// Command that puts the model's controlled point on `target`, starting the
/// search from the home command.
pub fn preposition(cfg: &ExperimentConfig, target: &Vector3<f64>) -> Result<ActuationQ<f64>> {
    let params = cfg.model_params()?;
    let control = cfg.control_config(Scheme::OpenLoop)?;
    let (q, err) = solve_model_ik(
        target,
        &cfg.home_q(),
        &control,
        &params,
        &cfg.geometry()?,
        PREPOSITION_ITERATIONS,
    )?;
    if !(err < control.convergence_threshold) {
        return Err(Error::Precondition(format!(
            "first waypoint is {err:.3} mm from the closest reachable model tip"
        )));
    }
    Ok(q)
}

/// Runs every configured scheme on a fresh plant with the same seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let waypoints = generate_path(&cfg.path)?;
    let start_q = preposition(cfg, &waypoints[0])?;
    let params = cfg.model_params()?;
    let geometry = cfg.geometry()?;
    let plant_cfg = cfg.plant_config()?;

    let mut runs = Vec::with_capacity(cfg.control.schemes.len());
    for &scheme in &cfg.control.schemes {
        log::info!("running {scheme} over {} waypoints", waypoints.len());
        let mut plant = SimPlant::new(plant_cfg.clone(), start_q)?;
        let mut controller =
            Controller::new(cfg.control_config(scheme)?, params, geometry, start_q)?;
        let outcomes = controller.follow_path(&waypoints, &mut plant)?;
        runs.push(SchemeRun {
            scheme,
            start_q,
            outcomes,
            logs: controller.into_logs(),
            commands: plant.history().to_vec(),
        });
    }
    let logs: Vec<CycleLog<f64>> = runs.iter().flat_map(|r| r.logs.iter().cloned()).collect();
    let report = PathReport::from_logs(&logs, &Vector3::from(cfg.path.normal), cfg.seed);
    Ok(ExperimentOutput {
        waypoints,
        runs,
        report,
    })
}
