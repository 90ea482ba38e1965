use ccr::harness::{generate_path, run_experiment, ExperimentConfig, PathReport, PlantProfile};
use ccr::{Error, Scheme};
use nalgebra::Vector3;

fn short(profile: PlantProfile) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.plant.profile = profile;
    cfg.path.n_points = 12;
    cfg
}

fn commands(cfg: &ExperimentConfig, scheme: Scheme) -> Vec<nalgebra::Vector6<f64>> {
    let out = run_experiment(cfg).unwrap();
    let run = out.runs.into_iter().find(|r| r.scheme == scheme).unwrap();
    run.commands.iter().map(|q| q.to_vector()).collect()
}

#[test]
fn open_loop_ignores_sensor_noise_and_seed() {
    let mut a = short(PlantProfile::PaperLike);
    a.control.schemes = vec![Scheme::OpenLoop, Scheme::ClosedLoop];
    let mut b = a.clone();
    b.seed = 99;
    b.plant.sensor_noise_sigma_pos = Some(2.0);
    assert_eq!(
        commands(&a, Scheme::OpenLoop),
        commands(&b, Scheme::OpenLoop)
    );
    assert_ne!(
        commands(&a, Scheme::ClosedLoop),
        commands(&b, Scheme::ClosedLoop)
    );
}

#[test]
fn schemes_agree_on_a_matched_plant() {
    let cfg = short(PlantProfile::Matched);
    let out = run_experiment(&cfg).unwrap();
    let reference = &out.runs[0].commands;
    for run in &out.runs[1..] {
        assert_eq!(run.commands.len(), reference.len(), "{}", run.scheme);
        for (a, b) in run.commands.iter().zip(reference) {
            assert!(
                (a.to_vector() - b.to_vector()).amax() < 1e-9,
                "{}",
                run.scheme
            );
        }
    }
    for log in out.logs() {
        // The fitting scheme logs the fitted tip, exact only to solver tolerance.
        let tol = if log.scheme == Scheme::ClosedLoopFit {
            1e-6
        } else {
            1e-9
        };
        let gap = (log.measured_tip - log.model_tip).norm();
        assert!(
            gap < tol,
            "{} waypoint {} cycle {}: {gap}",
            log.scheme,
            log.waypoint,
            log.cycle
        );
    }
}

#[test]
fn feedback_error_decreases_on_a_matched_plant() {
    let mut cfg = short(PlantProfile::Matched);
    cfg.control.schemes = vec![Scheme::ClosedLoop];
    cfg.control.convergence_threshold = 0.01;
    let out = run_experiment(&cfg).unwrap();
    let logs = &out.runs[0].logs;
    for pair in logs.windows(2) {
        if pair[0].waypoint == pair[1].waypoint {
            assert!(
                pair[1].feedback_error <= pair[0].feedback_error + 1e-9,
                "waypoint {} cycle {}: {} -> {}",
                pair[1].waypoint,
                pair[1].cycle,
                pair[0].feedback_error,
                pair[1].feedback_error
            );
        }
    }
}

#[test]
fn report_matches_recomputation_from_logs() {
    let cfg = short(PlantProfile::PaperLike);
    let out = run_experiment(&cfg).unwrap();
    let logs: Vec<_> = out.logs().cloned().collect();
    let again = PathReport::from_logs(&logs, &Vector3::from(cfg.path.normal), cfg.seed);
    assert_eq!(again, out.report);
    for s in &out.report.schemes {
        assert_eq!(s.waypoints.len(), cfg.path.n_points);
        let mean = s.waypoints.iter().map(|w| w.error).sum::<f64>() / s.waypoints.len() as f64;
        assert!((mean - s.aggregates.mean_error).abs() < 1e-12);
        for w in &s.waypoints {
            assert!(w.cycles <= cfg.control.max_cycles_per_target);
            let total = (w.in_plane.powi(2) + w.out_of_plane.powi(2)).sqrt();
            assert!((total - w.error).abs() < 1e-9);
        }
    }
}

#[test]
fn runs_start_on_the_first_waypoint() {
    let cfg = short(PlantProfile::Matched);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.waypoints, generate_path(&cfg.path).unwrap());
    let first = &out.runs[0].logs[0];
    assert_eq!(first.waypoint, 0);
    assert!(first.feedback_error < cfg.control.convergence_threshold);
}

#[test]
fn unreachable_path_is_rejected_before_running() {
    let mut cfg = short(PlantProfile::Matched);
    cfg.path.center = [0.0, 0.0, 400.0];
    assert!(matches!(run_experiment(&cfg), Err(Error::Precondition(_))));
}

#[test]
fn config_errors_name_the_offending_key() {
    let unknown = ExperimentConfig::from_toml_str("[control]\ngain = 1.0\n");
    assert!(matches!(unknown, Err(Error::Parse(_))));
    let err = ExperimentConfig::from_toml_str("[control]\nalpha = -1.0\n").unwrap_err();
    match err {
        Error::InvalidParameter { name, .. } => assert_eq!(name, "control.alpha"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = ExperimentConfig {
        seed: 17,
        ..ExperimentConfig::default()
    };
    cfg.plant.backlash_width = Some(0.1);
    cfg.path.radius = 15.0;
    let text = cfg.to_toml_string();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    assert_eq!(
        ExperimentConfig::from_toml_str("").unwrap(),
        ExperimentConfig::default()
    );
}
