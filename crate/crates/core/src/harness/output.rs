//! `report.json`, `waypoints.csv` and `cycles.csv` writers.
//!
//! Floats are rounded to 9 significant digits so that outputs are stable
//! across platforms whose last-bit arithmetic may differ.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::config::OUT_DIR_ENV;
use super::report::PathReport;
use super::ExperimentOutput;
use crate::controller::CycleLog;
use crate::error::{Error, Result};

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn num(x: f64) -> String {
    format!("{}", round_sig(x))
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("checked is_f64"));
            *v = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

pub fn report_json(report: &PathReport) -> String {
    let mut v = serde_json::to_value(report).expect("report serializes");
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub const WAYPOINT_COLUMNS: &str = "scheme,waypoint,target_x,target_y,target_z,tip_x,tip_y,tip_z,\
error,in_plane,out_of_plane,model_error,cycles,converged";

pub fn waypoints_csv(report: &PathReport) -> String {
    let mut s = String::from(WAYPOINT_COLUMNS);
    s.push('\n');
    for sr in &report.schemes {
        for w in &sr.waypoints {
            let _ = write!(s, "{},{}", sr.scheme, w.waypoint);
            for x in w.target.iter().chain(&w.final_tip) {
                let _ = write!(s, ",{}", num(*x));
            }
            for x in [w.error, w.in_plane, w.out_of_plane, w.model_error] {
                let _ = write!(s, ",{}", num(x));
            }
            let _ = writeln!(s, ",{},{}", w.cycles, u8::from(w.converged));
        }
    }
    s
}

pub const CYCLE_COLUMNS: &str = "scheme,waypoint,cycle,target_x,target_y,target_z,\
measured_x,measured_y,measured_z,model_x,model_y,model_z,feedback_error,\
theta1,l1,delta1,theta2,l2,delta2,\
q_delta1,q_beta1,q_gamma1,q_delta2,q_beta2,q_gamma2,\
converged,commanded,saturated,fit_accepted";

pub fn cycles_csv<'a>(logs: impl IntoIterator<Item = &'a CycleLog<f64>>) -> String {
    let mut s = String::from(CYCLE_COLUMNS);
    s.push('\n');
    for l in logs {
        let _ = write!(s, "{},{},{}", l.scheme, l.waypoint, l.cycle);
        let vectors = [l.target, l.measured_tip, l.model_tip];
        for x in vectors.iter().flat_map(|v| v.iter()) {
            let _ = write!(s, ",{}", num(*x));
        }
        let _ = write!(s, ",{}", num(l.feedback_error));
        for x in l.psi.to_vector().iter().chain(l.q.to_vector().iter()) {
            let _ = write!(s, ",{}", num(*x));
        }
        let fit = match l.fit_accepted {
            Some(b) => u8::from(b).to_string(),
            None => String::new(),
        };
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            u8::from(l.converged),
            u8::from(l.commanded),
            u8::from(l.saturated),
            fit
        );
    }
    s
}

/// Output directory: an explicit path wins, then the environment variable,
/// then the configured directory.
pub fn resolve_output_dir(explicit: Option<&Path>, configured: &Path) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    }
}

/// Writes the three output files into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    let io =
        |e: std::io::Error| Error::Precondition(format!("cannot write to {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join("report.json"), report_json(&out.report)).map_err(io)?;
    fs::write(dir.join("waypoints.csv"), waypoints_csv(&out.report)).map_err(io)?;
    fs::write(dir.join("cycles.csv"), cycles_csv(out.logs())).map_err(io)?;
    Ok(())
}
