use std::path::{Path, PathBuf};
use std::process::Command;

use mce::cli::io::{parse_brightness_csv, parse_profile_csv};
use mce::cli::{simulate, GeometrySpec, NoiseSpec};
use mce::projection::ScatteringLaw;
use mce::shape::ShapeParams;

const TRUTH: &str = r#"{
  "l_max": 2,
  "coeffs": [
    {"l": 2, "m": 0, "value": -0.1},
    {"l": 2, "m": 2, "value": 0.12},
    {"l": 1, "m": -1, "value": 0.03}
  ],
  "spin": {"pole_lon_deg": 30, "pole_lat_deg": 60, "period_h": 5, "phase0_deg": 0, "epoch": 0}
}"#;

fn mce() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mce"));
    cmd.env("MCE_THREADS", "1");
    cmd
}

fn exit_code(cmd: &mut Command) -> i32 {
    let out = cmd.output().unwrap();
    out.status.code().unwrap_or_else(|| panic!("killed: {}", String::from_utf8_lossy(&out.stderr)))
}

/// Writes the truth shape and a small simulation config into `dir`.
fn small_setup(dir: &Path, noise: f64) -> PathBuf {
    std::fs::write(dir.join("truth.json"), TRUTH).unwrap();
    let config = format!(
        r#"{{
  "shape": "truth.json",
  "subdivision": 1,
  "seed": 5,
  "noise": {{"sigma_l": {noise}, "sigma_r": {noise}, "seed": 9}},
  "model": {{"l_max": 2, "regularizer_weight": 0}},
  "geometry": {{"brightness_epochs": 12, "images": 3, "angles": 12}},
  "lambda_grid": {{"min": 0.01, "max": 100, "points": 9}}
}}"#
    );
    let path = dir.join("sim.json");
    std::fs::write(&path, config).unwrap();
    path
}

fn simulate_into(dir: &Path, noise: f64) -> PathBuf {
    let config = small_setup(dir, noise);
    let data = dir.join("data");
    assert_eq!(exit_code(mce().args(["simulate", "--config"]).arg(&config).arg("--out").arg(&data)), 0);
    data
}

#[test]
fn simulate_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_setup(dir.path(), 0.02);
    for out in ["a", "b"] {
        let status = mce()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["brightness.csv", "profiles.csv", "truth.json", "truth_shape.json", "run.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let data = dir.path().join("a");
    assert_eq!(parse_brightness_csv(data.join("brightness.csv")).unwrap().len(), 12);
    assert_eq!(parse_profile_csv(data.join("profiles.csv")).unwrap().point_count(), 36);
}

#[test]
fn relative_noise_level() {
    let truth = ShapeParams::sphere(1.0, 0);
    let geometry = GeometrySpec {
        brightness_epochs: 100,
        images: 1,
        angles: 4,
        ..Default::default()
    };
    let noise = NoiseSpec {
        sigma_l: 0.02,
        sigma_r: 0.02,
        seed: 11,
    };
    let sim = simulate(&truth, &ScatteringLaw::default(), 2, &geometry, &noise, 1).unwrap();
    let rel: Vec<f64> = sim
        .brightness
        .records
        .iter()
        .zip(&sim.true_brightness)
        .map(|(r, t)| (r.l_obs - t) / t)
        .collect();
    let mean = rel.iter().sum::<f64>() / rel.len() as f64;
    let std = (rel.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rel.len() - 1) as f64).sqrt();
    assert!((0.016..=0.024).contains(&std), "sample std {std}");
}

#[test]
fn noise_free_round_trip_recovers_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_into(dir.path(), 0.0);
    let out = dir.path().join("inv");
    assert_eq!(exit_code(mce().args(["invert", "--config"]).arg(data.join("run.json")).arg("--out").arg(&out)), 0);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let d = report["final"]["d"].as_array().unwrap();
    for v in d {
        assert!(v.as_f64().unwrap() < 1e-3, "{report}");
    }
    for file in ["scurve.csv", "profile_fit.csv", "shape.json"] {
        assert!(out.join(file).is_file(), "{file}");
    }
}

#[test]
fn impossible_bounds_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_into(dir.path(), 0.05);
    let run = data.join("run.json");
    let mut config: serde_json::Value = serde_json::from_slice(&std::fs::read(&run).unwrap()).unwrap();
    config["bounds"] = serde_json::json!({"brightness": 1e-6, "profile": 1e-6});
    std::fs::write(&run, config.to_string()).unwrap();
    let out = dir.path().join("inv");
    assert_eq!(exit_code(mce().args(["invert", "--config"]).arg(&run).arg("--out").arg(&out)), 2);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["feasibility"]["verdict"], "infeasible");
    assert_eq!(report["status"], "infeasible");
    assert!(report["ideal_point"].is_object());
}

#[test]
fn missing_data_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"brightness": "absent.csv", "profiles": "absent_too.csv"}"#).unwrap();
    let out = dir.path().join("out");
    let output = mce().args(["invert", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("absent.csv"));
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

fn read_scurve(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn quadratic_selftest_matches_closed_form() {
    let output = mce().args(["scurve", "--selftest", "quadratic"]).output().unwrap();
    assert!(output.status.success());
    let (header, rows) = read_scurve(&String::from_utf8(output.stdout).unwrap());
    assert_eq!(&header[..3], ["lambda_1", "chi2_1", "chi2_2"]);
    assert_eq!(rows.len(), 25);
    for row in rows {
        let l = row[0];
        assert!((row[1] - ((l / (1.0 + l)).powi(2) + 1.0)).abs() < 1e-6, "{row:?}");
        assert!((row[2] - ((1.0 / (1.0 + l)).powi(2) + 1.0)).abs() < 1e-6, "{row:?}");
    }
}

#[test]
fn one_point_grid_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("grid.json");
    std::fs::write(&config, r#"{"lambda_grid": {"min": 1, "max": 1, "points": 1}}"#).unwrap();
    let out = dir.path().join("out");
    let status = mce()
        .args(["scurve", "--selftest", "quadratic", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let (_, rows) = read_scurve(&std::fs::read_to_string(out.join("scurve.csv")).unwrap());
    assert_eq!(rows.len(), 1);
    assert!((rows[0][1] - 1.25).abs() < 1e-6);
}

#[test]
fn unknown_selftest_fails() {
    assert_eq!(exit_code(mce().args(["scurve", "--selftest", "cubic"])), 1);
}
