use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ccr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccr"))
        .args(args)
        .env_remove("CCR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn short_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, format!("[path]\nn_points = 8\n{extra}")).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn follow_path_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "");
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = ccr(&[
            "follow-path",
            "-c",
            &cfg,
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["waypoints.csv", "cycles.csv"] {
            assert!(out.join(f).is_file());
        }
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(report["seed"], 4);
}

#[test]
fn output_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "[control]\nschemes = [\"open_loop\"]\n");
    let out = tmp.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_ccr"))
        .args(["follow-path", "-c", &cfg])
        .env("CCR_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").is_file());
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for body in [
        "[control]\nalpha = \"fast\"\n",
        "[control]\nalpha = -1.0\n",
        "[robot]\nunknown = 1\n",
    ] {
        let cfg = tmp.path().join("bad.toml");
        fs::write(&cfg, body).unwrap();
        let o = ccr(&[
            "follow-path",
            "-c",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
        assert!(!out.exists());
    }
}

#[test]
fn plant_fault_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // The plant's catheter bends four times more than the model expects and
    // leaves its valid range at the starting command.
    let cfg = short_config(tmp.path(), "[plant]\nk2_scale = 4.0\n");
    let out = tmp.path().join("out");
    let o = ccr(&["follow-path", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("plant fault"));
}

#[test]
fn fk_prints_both_coils() {
    let o = ccr(&["fk", "--q", "0.3,10,1.0,-0.5,20,2.0"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let t = v["catheter_coil"]["tangent"].as_array().unwrap();
    let norm: f64 = t
        .iter()
        .map(|x| x.as_f64().unwrap().powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
    assert_eq!(v["control_jacobian"].as_array().unwrap().len(), 3);
    assert_eq!(ccr(&["fk", "--q", "1,2,3"]).status.code(), Some(2));
}

#[test]
fn jacobian_check_passes() {
    let o = ccr(&["jacobian-check", "--samples", "50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], true);
}

#[test]
fn fit_shape_recovers_readings_from_a_file() {
    let tmp = tempfile::tempdir().unwrap();
    let fk = ccr(&["fk", "--q", "0.3,10,1.0,-0.5,20,2.0"]);
    let v: serde_json::Value = serde_json::from_slice(&fk.stdout).unwrap();
    let line = |coil: &str| {
        let c = &v[format!("{coil}_coil")];
        let nums: Vec<String> = c["position"]
            .as_array()
            .unwrap()
            .iter()
            .chain(c["tangent"].as_array().unwrap())
            .map(|x| format!("{}", x.as_f64().unwrap()))
            .collect();
        format!("{coil} {}\n", nums.join(" "))
    };
    let path = tmp.path().join("readings.txt");
    fs::write(
        &path,
        format!("# test\n{}{}", line("sheath"), line("catheter")),
    )
    .unwrap();
    let o = ccr(&[
        "fit-shape",
        "--readings",
        path.to_str().unwrap(),
        "--q",
        "0.3,10,1.0,-0.5,20,2.0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let gap: f64 = (0..3)
        .map(|i| {
            (r["fitted_tip"][i].as_f64().unwrap() - r["measured_tip"][i].as_f64().unwrap()).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    assert!(gap < 1e-6, "{gap}");
}

#[test]
fn calibrate_reads_a_sample_file() {
    let tmp = tempfile::tempdir().unwrap();
    // Samples generated with k1 = 0.5, k2 = 0.4, kc = 0.2.
    let mut text = String::from("# delta1 beta1 gamma1 delta2 beta2 gamma2 theta1 theta2\n");
    for i in 0..12 {
        let t = i as f64;
        let (d1, g1, d2, g2) = (
            0.5 * t - 2.0,
            0.7 * t.sin() * 3.0,
            1.3 * t.cos(),
            2.5 * (0.4 * t).cos(),
        );
        let theta1 = 0.5 * g1;
        let theta2 = 0.4 * g2 + 0.2 * 0.5 * g1 * (d1 - d2).cos();
        text += &format!("{d1}, 10, {g1}, {d2}, 20, {g2}, {theta1}, {theta2}\n");
    }
    let samples = tmp.path().join("samples.txt");
    fs::write(&samples, text).unwrap();
    let out = tmp.path().join("out");
    let o = ccr(&[
        "calibrate",
        "--samples",
        samples.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    for (key, want) in [("k1", 0.5), ("k2", 0.4), ("kc", 0.2)] {
        assert!(
            (v[key].as_f64().unwrap() - want).abs() < 1e-9,
            "{key} = {}",
            v[key]
        );
    }
}
