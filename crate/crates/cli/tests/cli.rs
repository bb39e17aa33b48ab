//! End-to-end checks of the command-line surface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgha"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sgha-cli-test-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

#[test]
fn landscape_census_csv() {
    let dir = workdir("landscape");
    let problem = dir.join("problem.json");
    write(&problem, r#"{"setting": 1, "d": 6, "seed": 0}"#);
    let out = dir.join("census.csv");
    let status = bin()
        .args(["landscape", "--config"])
        .arg(&problem)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index_set,classification,lagrangian,lambda_min_H,hessian_rank,curvature_bound,kkt_primal,kkt_feasibility");
    assert_eq!(lines.len(), 7, "header + C(6,1) equilibria");
    let stable: Vec<&&str> = lines.iter().filter(|l| l.contains(",stable,")).collect();
    assert_eq!(stable.len(), 1);
    assert!(stable[0].starts_with("1,"), "stable class should be index 1: {}", stable[0]);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn solve_writes_trajectory() {
    let dir = workdir("solve");
    let config = dir.join("run.json");
    write(
        &config,
        r#"{
            "problem": {"setting": 2, "d": 8, "seed": 1},
            "eta": 2e-3, "iters": 500, "record_stride": 100,
            "oracle": {"kind": "gauss_cov", "n_draws": 10}
        }"#,
    );
    let out = dir.join("traj.csv");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "iter,error,lagrangian,feasibility,wallclock_ns");
    assert_eq!(text.lines().count(), 1 + 6, "records at 0,100,...,500");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn diagnose_ode_slope_round_trip() {
    let dir = workdir("diagnose");
    // Commuting diagonal pencil via CSV fixtures.
    write(&dir.join("a.csv"), "1.0,0.0,0.0\n0.0,0.66,0.0\n0.0,0.0,0.22\n");
    write(&dir.join("b.csv"), "1.0,0.0,0.0\n0.0,1.2,0.0\n0.0,0.0,1.1\n");
    let config = dir.join("run.json");
    write(
        &config,
        r#"{
            "problem": {"A": "a.csv", "B": "b.csv", "r": 1},
            "eta": 1e-4, "iters": 20000, "record_stride": 10,
            "oracle": {"kind": "exact"}
        }"#,
    );
    let traj = dir.join("traj.csv");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&traj)
        .args(["--seed", "2", "--record-w"])
        .status()
        .unwrap();
    assert!(status.success());

    let report = dir.join("slopes.csv");
    let status = bin()
        .args(["diagnose", "--config"])
        .arg(&config)
        .arg("--run")
        .arg(&traj)
        .args(["--check", "ode-slope", "--out"])
        .arg(&report)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let rel: f64 = fields[3].parse().unwrap();
        let r2: f64 = fields[4].parse().unwrap();
        assert!(rel < 0.05, "slope off by {rel}: {row}");
        assert!(r2 > 0.99, "poor fit: {row}");
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn experiment_replays_byte_identically() {
    let dir = workdir("experiment");
    let config = dir.join("exp.json");
    write(
        &config,
        r#"{
            "problem": {"setting": 1, "d": 10, "seed": 0},
            "eta": 1e-3, "iters": 300, "record_stride": 50,
            "oracle": {"kind": "gauss_cov", "n_draws": 5},
            "seeds": {"master": 9, "count": 3}
        }"#,
    );
    for name in ["x", "y"] {
        let status = bin()
            .args(["experiment", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.join(name))
            .args(["--jobs", "2"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let mut names: Vec<String> = fs::read_dir(dir.join("x"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"summary.csv".into()));
    assert!(names.contains(&"summary.json".into()));
    for name in &names {
        let a = fs::read(dir.join("x").join(name)).unwrap();
        let b = fs::read(dir.join("y").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between replays");
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_inputs_fail_loudly() {
    let dir = workdir("bad");
    // Missing config.
    let status = bin().args(["landscape"]).status().unwrap();
    assert!(!status.success());
    // Unknown diagnostic check.
    let config = dir.join("run.json");
    write(
        &config,
        r#"{"problem": {"setting": 1, "d": 6, "seed": 0}, "eta": 1e-3, "oracle": {"kind": "exact"}}"#,
    );
    let status = bin()
        .args(["diagnose", "--config"])
        .arg(&config)
        .args(["--check", "nonsense"])
        .status()
        .unwrap();
    assert!(!status.success());
    // Divergent sweep exits nonzero.
    let diverging = dir.join("diverge.json");
    write(
        &diverging,
        r#"{
            "problem": {"setting": 1, "d": 10, "seed": 0},
            "eta": 50.0, "iters": 2000, "record_stride": 100,
            "oracle": {"kind": "gauss_cov", "n_draws": 5},
            "seeds": [1]
        }"#,
    );
    let status = bin()
        .args(["experiment", "--config"])
        .arg(&diverging)
        .arg("--out")
        .arg(dir.join("div"))
        .status()
        .unwrap();
    assert!(!status.success());
    fs::remove_dir_all(&dir).ok();
}
