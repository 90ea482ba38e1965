use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccr::actuation::{calibrate, parse_samples};
use ccr::estimator::{fit_shape, CoilId, CoilReading};
use ccr::harness::{resolve_output_dir, run_experiment, write_outputs, ExperimentConfig};
use ccr::jacobians::{control_jacobian, fd};
use ccr::kinematics::coil_fk;
use ccr::{actuation_to_shape, ActuationQ, Error, Plant, Scheme, SimPlant};
use clap::{Args, Parser, Subcommand};
use nalgebra::{Vector3, Vector6};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "ccr",
    version,
    about = "Continuum robot kinematics, control and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Defaults apply to missing keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the plant RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides CCR_OUT_DIR and the configured directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward kinematics of a command.
    Fk {
        #[command(flatten)]
        common: Common,
        /// Command `delta1,beta1,gamma1,delta2,beta2,gamma2` (rad, mm, rad, ...); default home_q.
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
    },
    /// Compare analytic Jacobians with central differences.
    JacobianCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Fit k1, k2, kc from a sample file.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// One sample per line: q (6 values) then measured theta1, theta2.
        #[arg(long)]
        samples: PathBuf,
    },
    /// Estimate the shape from two coil readings.
    FitShape {
        #[command(flatten)]
        common: Common,
        /// Readings file; when absent the simulated plant is read at `--q`.
        #[arg(long)]
        readings: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
    },
    /// Follow the configured path with one or more control schemes.
    FollowPath {
        #[command(flatten)]
        common: Common,
        /// Scheme to run; repeat for several. Default: the configured list.
        #[arg(long)]
        scheme: Vec<Scheme>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_) | Error::InvalidParameter { .. } => 2,
            Error::PlantFault(_) => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_toml_str(&read_text(p)?)
            .map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn parse_q(text: Option<&str>, cfg: &ExperimentConfig) -> Result<ActuationQ<f64>, Failure> {
    let Some(text) = text else {
        return Ok(cfg.home_q());
    };
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--q: {e}")))?;
    if v.len() != 6 {
        return Err(usage(format!("--q: expected 6 values, got {}", v.len())));
    }
    Ok(ActuationQ::from_vector(&Vector6::from_column_slice(&v)))
}

fn print_json(v: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("value serializes")
    );
}

fn fk(common: &Common, q: Option<&str>) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let params = cfg.model_params()?;
    let q = parse_q(q, &cfg)?;
    let psi = actuation_to_shape(&q, &params)?;
    let geom = cfg
        .geometry()?
        .with_straight_length(params.straight_length(&q));
    let (c1, c2) = coil_fk(&psi, &geom)?;
    let cj = control_jacobian(&psi, &q, &params, &cfg.geometry()?)?;
    let rows = |m: &nalgebra::Matrix3<f64>| -> Vec<Vec<f64>> {
        (0..3).map(|r| m.row(r).iter().copied().collect()).collect()
    };
    print_json(&json!({
        "q": q.to_vector().as_slice(),
        "psi": psi,
        "straight_length": geom.straight_length,
        "sheath_coil": { "position": c1.position.as_slice(), "tangent": c1.tangent().as_slice(),
                         "rotation": rows(c1.rotation.matrix()) },
        "catheter_coil": { "position": c2.position.as_slice(), "tangent": c2.tangent().as_slice(),
                           "rotation": rows(c2.rotation.matrix()) },
        "control_jacobian": (0..3).map(|r| cj.j.row(r).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
    }));
    Ok(())
}

fn jacobian_check(common: &Common, samples: usize, tolerance: f64) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let report = fd::random_check(samples, cfg.seed, &cfg.model_params()?)?;
    let pass = report.passes(tolerance);
    print_json(&json!({ "report": report, "tolerance": tolerance, "pass": pass }));
    if pass {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: "analytic and finite-difference Jacobians disagree".into(),
        })
    }
}

fn run_calibrate(common: &Common, samples: &Path) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let samples = parse_samples(&read_text(samples)?)
        .map_err(|e| usage(format!("{}: {e}", samples.display())))?;
    let (params, report) = calibrate(&samples, &cfg.model_params()?)?;
    let out = json!({ "k1": params.k1, "k2": params.k2, "kc": params.kc, "report": report });
    print_json(&out);
    if common.out.is_some() || std::env::var_os(ccr::harness::OUT_DIR_ENV).is_some() {
        let dir = resolve_output_dir(common.out.as_deref(), &cfg.output.dir);
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(&dir)?;
            fs::write(
                dir.join("calibration.json"),
                serde_json::to_string_pretty(&out)? + "\n",
            )
        };
        write().map_err(|e| Failure {
            code: 1,
            message: format!("cannot write to {}: {e}", dir.display()),
        })?;
    }
    Ok(())
}

/// Lines `sheath|catheter px py pz tx ty tz`, `#` starts a comment.
fn parse_readings(text: &str) -> Result<(CoilReading<f64>, CoilReading<f64>), Failure> {
    let mut sheath = None;
    let mut catheter = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| usage(format!("readings line {}: {m}", i + 1));
        let mut parts = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty());
        let coil = match parts.next() {
            Some("sheath") => CoilId::Sheath,
            Some("catheter") => CoilId::Catheter,
            other => {
                return Err(bad(format!(
                    "expected `sheath` or `catheter`, got {other:?}"
                )))
            }
        };
        let v: Vec<f64> = parts
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("{e}")))?;
        if v.len() != 6 {
            return Err(bad(format!("expected 6 numbers, got {}", v.len())));
        }
        let t = Vector3::new(v[3], v[4], v[5]);
        if t.norm().is_nan() || t.norm() == 0.0 {
            return Err(bad("tangent must be non-zero".into()));
        }
        let r = CoilReading::new(coil, Vector3::new(v[0], v[1], v[2]), t, 0.0);
        match coil {
            CoilId::Sheath => sheath = Some(r),
            CoilId::Catheter => catheter = Some(r),
        }
    }
    match (sheath, catheter) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(usage("readings need one `sheath` and one `catheter` line")),
    }
}

fn run_fit_shape(common: &Common, readings: Option<&Path>, q: Option<&str>) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let params = cfg.model_params()?;
    let q = parse_q(q, &cfg)?;
    let geom = cfg
        .geometry()?
        .with_straight_length(params.straight_length(&q));
    let (r1, r2) = match readings {
        Some(p) => parse_readings(&read_text(p)?)?,
        None => SimPlant::new(cfg.plant_config()?, q)?.read_coils()?,
    };
    let initial = actuation_to_shape(&q, &params)?;
    let fit = fit_shape(
        (&r1, &r2),
        &initial,
        &cfg.control_config(Scheme::ClosedLoopFit)?.fit,
        &geom,
    );
    let tip = coil_fk(&fit.psi, &geom)?.1.position;
    print_json(&json!({
        "fit": fit,
        "fitted_tip": tip.as_slice(),
        "measured_tip": r2.position.as_slice(),
    }));
    Ok(())
}

fn follow_path(common: &Common, schemes: &[Scheme]) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    if !schemes.is_empty() {
        cfg.control.schemes = schemes.to_vec();
    }
    let out = run_experiment(&cfg)?;
    let dir = resolve_output_dir(common.out.as_deref(), &cfg.output.dir);
    write_outputs(&dir, &out).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    for s in &out.report.schemes {
        let a = &s.aggregates;
        println!(
            "{:<16} mean error {:.3} mm (in-plane {:.3}, out-of-plane {:.3}), model error {:.3} mm, converged {:.1}%",
            s.scheme.as_str(),
            a.mean_error,
            a.mean_in_plane,
            a.mean_out_of_plane,
            a.mean_model_error,
            100.0 * a.converged_fraction
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fk { common, q } => fk(common, q.as_deref()),
        Command::JacobianCheck {
            common,
            samples,
            tolerance,
        } => jacobian_check(common, *samples, *tolerance),
        Command::Calibrate { common, samples } => run_calibrate(common, samples),
        Command::FitShape {
            common,
            readings,
            q,
        } => run_fit_shape(common, readings.as_deref(), q.as_deref()),
        Command::FollowPath { common, scheme } => follow_path(common, scheme),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
