//! Per-waypoint and aggregate error statistics, computed only from cycle logs.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::path::decompose_error;
use crate::controller::{CycleLog, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointReport {
    pub waypoint: usize,
    /// mm
    pub target: [f64; 3],
    /// Measured controlled point after the last cycle, mm.
    pub final_tip: [f64; 3],
    /// mm
    pub error: f64,
    pub in_plane: f64,
    pub out_of_plane: f64,
    /// Distance between the model-predicted and measured tip, mm.
    pub model_error: f64,
    /// Commands issued for this waypoint.
    pub cycles: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_waypoints: usize,
    pub converged_fraction: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub mean_in_plane: f64,
    pub max_in_plane: f64,
    pub mean_out_of_plane: f64,
    pub max_out_of_plane: f64,
    pub mean_model_error: f64,
    pub max_model_error: f64,
    pub mean_cycles: f64,
    pub max_cycles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub aggregates: Aggregates,
    pub waypoints: Vec<WaypointReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub seed: u64,
    /// Unit normal of the path plane used for the decomposition.
    pub normal: [f64; 3],
    pub schemes: Vec<SchemeReport>,
}

impl PathReport {
    /// Groups logs by scheme and waypoint in order of first appearance; the
    /// last record of each waypoint holds its final state.
    pub fn from_logs(logs: &[CycleLog<f64>], normal: &Vector3<f64>, seed: u64) -> Self {
        let mut schemes: Vec<(Scheme, Vec<WaypointReport>)> = Vec::new();
        for log in logs {
            if schemes.last().is_none_or(|(s, _)| *s != log.scheme) {
                schemes.push((log.scheme, Vec::new()));
            }
            let wps = &mut schemes.last_mut().expect("pushed above").1;
            if wps.last().is_none_or(|w| w.waypoint != log.waypoint) {
                wps.push(WaypointReport {
                    waypoint: log.waypoint,
                    target: log.target.into(),
                    final_tip: [0.0; 3],
                    error: 0.0,
                    in_plane: 0.0,
                    out_of_plane: 0.0,
                    model_error: 0.0,
                    cycles: 0,
                    converged: false,
                });
            }
            let w = wps.last_mut().expect("pushed above");
            let e = log.target - log.measured_tip;
            let (out_of_plane, in_plane) = decompose_error(&e, normal);
            w.final_tip = log.measured_tip.into();
            w.error = e.norm();
            w.in_plane = in_plane;
            w.out_of_plane = out_of_plane;
            w.model_error = (log.model_tip - log.measured_tip).norm();
            w.cycles += usize::from(log.commanded);
            w.converged = log.converged;
        }
        Self {
            seed,
            normal: (*normal).into(),
            schemes: schemes
                .into_iter()
                .map(|(scheme, waypoints)| SchemeReport {
                    scheme,
                    aggregates: Aggregates::of(&waypoints),
                    waypoints,
                })
                .collect(),
        }
    }

    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeReport> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }
}

impl Aggregates {
    pub fn of(w: &[WaypointReport]) -> Self {
        let n = w.len();
        let mean = |f: fn(&WaypointReport) -> f64| {
            if n == 0 {
                0.0
            } else {
                w.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let max = |f: fn(&WaypointReport) -> f64| w.iter().map(f).fold(0.0, f64::max);
        Self {
            n_waypoints: n,
            converged_fraction: mean(|x| f64::from(u8::from(x.converged))),
            mean_error: mean(|x| x.error),
            max_error: max(|x| x.error),
            mean_in_plane: mean(|x| x.in_plane),
            max_in_plane: max(|x| x.in_plane),
            mean_out_of_plane: mean(|x| x.out_of_plane),
            max_out_of_plane: max(|x| x.out_of_plane),
            mean_model_error: mean(|x| x.model_error),
            max_model_error: max(|x| x.model_error),
            mean_cycles: mean(|x| x.cycles as f64),
            max_cycles: w.iter().map(|x| x.cycles).max().unwrap_or(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::ActuationQ;
    use crate::kinematics::ConfigPsi;

    fn log(
        scheme: Scheme,
        waypoint: usize,
        cycle: usize,
        tip: [f64; 3],
        commanded: bool,
    ) -> CycleLog<f64> {
        CycleLog {
            scheme,
            waypoint,
            cycle,
            target: Vector3::new(0.0, 0.0, 10.0),
            measured_tip: Vector3::from(tip),
            model_tip: Vector3::from(tip) + Vector3::new(0.0, 1.0, 0.0),
            feedback_error: 0.0,
            psi: ConfigPsi::straight(50.0, 40.0).unwrap(),
            q: ActuationQ::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            converged: !commanded,
            commanded,
            saturated: false,
            fit_accepted: None,
        }
    }

    #[test]
    fn final_record_wins() {
        let logs = vec![
            log(Scheme::OpenLoop, 0, 0, [5.0, 0.0, 10.0], true),
            log(Scheme::OpenLoop, 0, 1, [3.0, 0.0, 14.0], false),
            log(Scheme::OpenLoop, 1, 0, [0.0, 0.0, 10.0], false),
            log(Scheme::ClosedLoop, 0, 0, [0.0, 0.0, 11.0], false),
        ];
        let r = PathReport::from_logs(&logs, &Vector3::z(), 3);
        assert_eq!(r.schemes.len(), 2);
        let open = r.scheme(Scheme::OpenLoop).unwrap();
        let w0 = &open.waypoints[0];
        assert_eq!(w0.cycles, 1);
        assert!(w0.converged);
        assert_eq!((w0.in_plane, w0.out_of_plane, w0.error), (3.0, 4.0, 5.0));
        assert_eq!(w0.model_error, 1.0);
        assert_eq!(open.aggregates.n_waypoints, 2);
        assert_eq!(open.aggregates.mean_error, 2.5);
        assert_eq!(open.aggregates.max_in_plane, 3.0);
        assert_eq!(
            r.scheme(Scheme::ClosedLoop)
                .unwrap()
                .aggregates
                .mean_out_of_plane,
            1.0
        );
    }

    #[test]
    fn decomposition_is_pythagorean() {
        let logs = vec![log(Scheme::ClosedLoopFit, 0, 0, [1.3, -2.1, 7.7], false)];
        let n = Vector3::new(0.5, 0.0, 0.75f64.sqrt());
        let w = &PathReport::from_logs(&logs, &n, 0).schemes[0].waypoints[0];
        assert!((w.in_plane.powi(2) + w.out_of_plane.powi(2) - w.error.powi(2)).abs() < 1e-9);
    }
}
