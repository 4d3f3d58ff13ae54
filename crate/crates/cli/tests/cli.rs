use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_trapped-pressure"));
    c.env_remove("TRAPPED_PRESSURE_WORKERS").env_remove("TRAPPED_PRESSURE_RTOL");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn written(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

fn only_json(dir: &Path) -> Value {
    let files = written(dir, "json");
    assert_eq!(files.len(), 1, "{files:?}");
    serde_json::from_slice(&fs::read(&files[0]).unwrap()).unwrap()
}

#[test]
fn horizons_schwarzschild() {
    let out = run(&["horizons", "--mass", "1", "--spin", "0", "--lambda", "0"]);
    assert!(out.status.success());
    let j = stdout_json(&out);
    assert_eq!(j["horizons"]["r_event"], 2.0);
    assert_eq!(j["horizons"]["r_cosmo"], "inf");
}

#[test]
fn horizons_rejects_superextremal_spin() {
    let out = run(&["horizons", "--mass", "1", "--spin", "1.1", "--lambda", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subextremal"));
}

#[test]
fn horizons_de_sitter() {
    let j = stdout_json(&run(&["horizons", "--mass", "1", "--spin", "0", "--lambda", "0.03"]));
    let h = &j["horizons"];
    assert!((h["r_event"].as_f64().unwrap() - 2.09).abs() < 0.01);
    assert!((h["r_cosmo"].as_f64().unwrap() - 8.79).abs() < 0.01);
}

#[test]
fn photon_region_tables() {
    let j = stdout_json(&run(&["photon-region", "--spin", "0"]));
    let rows = j["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["r"], 3.0);

    let j = stdout_json(&run(&["photon-region", "--spin", "0.9", "--r", "3"]));
    let b = j["bounds"].as_array().unwrap();
    assert!((b[0].as_f64().unwrap() - 1.558).abs() < 1e-3);
    assert!((b[1].as_f64().unwrap() - 3.910).abs() < 1e-3);
    let row = j["rows"].as_array().unwrap().iter().find(|r| r["r"] == 3.0).unwrap();
    assert!((row["phi"].as_f64().unwrap() + 1.8).abs() < 1e-9);
    assert!((row["eta"].as_f64().unwrap() - 27.0).abs() < 1e-9);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["horizons", "--set", "spacetime.charge=1"]).status.code(), Some(2));
    assert_eq!(run(&["horizons", "--set", "spacetime.spin=\"fast\""]).status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "nh.r_cap = 10\nspacetime.colour = 3\n").unwrap();
    let out = run(&["horizons", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spacetime.colour"));
    assert_eq!(run(&["horizons", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(run(&["pressure", "--system", "toy", "--t", "10,5"]).status.code(), Some(2));
}

#[test]
fn flags_override_file_and_set_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "spacetime.spin = 0.5\nspacetime.lambda = 0.03\n").unwrap();
    let c = cfg.to_str().unwrap();
    let j = stdout_json(&run(&["horizons", "--config", c]));
    assert_eq!(j["spacetime"]["spin"], 0.5);
    assert_eq!(j["spacetime"]["lambda"], 0.03);
    let j = stdout_json(&run(&["horizons", "--config", c, "--spin", "0.6"]));
    assert_eq!(j["spacetime"]["spin"], 0.6);
    let j = stdout_json(&run(&["horizons", "--config", c, "--spin", "0.6", "--set", "spacetime.spin=0.7"]));
    assert_eq!(j["spacetime"]["spin"], 0.7);
}

#[test]
fn toy_pressure_and_outputs() {
    let dir = TempDir::new().unwrap();
    let out = run(&["pressure", "--system", "toy", "--nu", "0.5", "--s", "1", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = only_json(dir.path());
    let p = j["estimates"][0]["p_hat"].as_f64().unwrap();
    assert!((-0.55..=-0.45).contains(&p), "{p}");
    assert_eq!(j["config"]["toy"]["nu"], 0.5);
    assert_eq!(j["config"]["system"], "toy");
    let csv = fs::read_to_string(&written(dir.path(), "csv")[0]).unwrap();
    assert!(csv.starts_with("s,eps,T,count,log_z,slope,p_hat\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
}

#[test]
fn schwarzschild_pressure_with_variational() {
    let dir = TempDir::new().unwrap();
    let out = run(&["pressure", "--system", "schwarzschild", "--s", "0.5", "--variational", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = only_json(dir.path());
    let exact = -0.5 / 3f64.sqrt();
    let p = j["estimates"][0]["p_hat"].as_f64().unwrap();
    assert!((p - exact).abs() < 0.1 * exact.abs(), "{p}");
    let v = j["variational"][0]["value"].as_f64().unwrap();
    assert!((v - exact).abs() < 1e-3, "{v}");
    assert_eq!(j["agreement"][0]["agree"], true);
    assert_eq!(j["nh"]["r_star"], 10);
}

#[test]
fn kerr_pressure_is_negative() {
    let dir = TempDir::new().unwrap();
    let out = run(&["pressure", "--system", "kerr", "--spin", "0.9", "--s", "0.5", "--samples", "300", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = only_json(dir.path());
    let e = &j["estimates"][0];
    let (p, se) = (e["p_hat"].as_f64().unwrap(), e["stderr"].as_f64().unwrap());
    assert!(p + 3.0 * se < 0.0, "{p} ± {se}");
}

#[test]
fn cat_variational_is_refused_but_run_succeeds() {
    let dir = TempDir::new().unwrap();
    let out = run(&["pressure", "--system", "cat", "--samples", "500", "--s", "0", "--variational", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let j = only_json(dir.path());
    assert_eq!(j["nh"]["r_star"], 0);
    assert!(j["variational_refused"].as_str().unwrap().contains("normally hyperbolic"));
}

#[test]
fn strict_coverage_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = run(&["pressure", "--system", "toy", "--samples", "100", "--s", "1", "--strict", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coverage"));
}

#[test]
fn pressure_json_is_identical_across_worker_counts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["pressure", "--system", "toy", "--s", "0,0.5,1", "--seed", "7"];
    let out = bin().args(args).args(["--out-dir", a.path().to_str().unwrap(), "--workers", "1"]).output().unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(args)
        .args(["--out-dir", b.path().to_str().unwrap()])
        .env("TRAPPED_PRESSURE_WORKERS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let (ja, jb) = (written(a.path(), "json"), written(b.path(), "json"));
    assert_eq!(ja[0].file_name(), jb[0].file_name());
    assert_eq!(fs::read(&ja[0]).unwrap(), fs::read(&jb[0]).unwrap());
    assert_eq!(fs::read(&written(a.path(), "csv")[0]).unwrap(), fs::read(&written(b.path(), "csv")[0]).unwrap());
}

#[test]
fn orbit_lyapunov_and_nh_outputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["orbit", "--system", "schwarzschild", "--horizon", "20", "--out-dir", d]);
    assert!(out.status.success());
    let csv = fs::read_to_string(&written(dir.path(), "csv")[0]).unwrap();
    assert!(csv.starts_with("s,t,r,theta,phi,p_t,p_r,p_theta,p_phi,"), "{}", csv.lines().next().unwrap());
    assert_eq!(csv.lines().count(), 1 + 41);

    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(run(&["lyapunov", "--system", "schwarzschild", "--rows", "2", "--horizon", "60", "--out-dir", d]).status.success());
    let j = only_json(dir.path());
    for r in j["records"].as_array().unwrap() {
        assert!((r["asymptotic_rate"].as_f64().unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-3);
    }

    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(run(&["nh-check", "--system", "toy", "--nh-samples", "4", "--horizon", "40", "--out-dir", d]).status.success());
    let j = only_json(dir.path());
    assert_eq!(j["report"]["r_star"], 10);
}

#[test]
fn validate_passes_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let out = run(&["validate", "--out-dir", a.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
    assert!(run(&["validate", "--out-dir", b.path().to_str().unwrap(), "--workers", "2"]).status.success());
    assert_eq!(fs::read(&written(a.path(), "json")[0]).unwrap(), fs::read(&written(b.path(), "json")[0]).unwrap());
}

#[test]
fn loosened_tolerance_fails_a_named_check() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .args(["validate", "--out-dir", dir.path().to_str().unwrap()])
        .env("TRAPPED_PRESSURE_RTOL", "1e-4")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("schwarzschild.pressure") && l.ends_with("FAIL")), "{stdout}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("schwarzschild.pressure"));
    let bad = bin().args(["validate"]).env("TRAPPED_PRESSURE_RTOL", "loose").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
