use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn iso_model(h: f64, clock: Value, drift: Value) -> Value {
    json!({"dim": 1, "drift": drift, "noise": {"hurst": [h], "clocks": [clock]}})
}

fn linear_clock() -> Value {
    json!({"kind": "linear", "rate": 1.0})
}

fn zero_drift() -> Value {
    json!({"field": {"kind": "zero"}, "certificate": {"condition": "one_sided_lipschitz", "k": {"kind": "constant", "value": 0.0}}})
}

fn contracting() -> Value {
    json!({"field": {"kind": "linear", "rate": 1.0}, "certificate": {"condition": "one_sided_lipschitz", "k": {"kind": "constant", "value": -1.0}}})
}

fn one_plus_clamp() -> Value {
    json!({"op": "sum", "terms": [
        {"op": "constant", "value": 1.0},
        {"op": "clamp", "inner": {"op": "coordinate", "index": 0}, "lo": 0.0, "hi": 1.0}
    ]})
}

fn run(dir: &Path, config: &Value, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_tcfbm"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir)
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn verify_config(clock: Value, inequality: Value) -> Value {
    json!({
        "task": "verify-harnack",
        "model": iso_model(0.3, clock, contracting()),
        "run": {"n_paths": 2000, "n_z_samples": 2000, "cells": 16},
        "inequality": inequality,
        "f": one_plus_clamp(),
        "x": [0.0],
        "y": [1.0]
    })
}

#[test]
fn verify_harnack_passes_and_stamps_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &verify_config(linear_clock(), json!({"kind": "log"})), &["--seed", "17"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["pass"], true);
    assert_eq!(r["kind"], "log");
    assert_eq!(r["seed"], 17);
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.trim_end().starts_with("verify-harnack: pass ("), "{stdout}");
}

#[test]
fn hurst_one_half_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = verify_config(linear_clock(), json!({"kind": "log"}));
    cfg["model"]["noise"]["hurst"] = json!([0.5]);
    let out = run(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0 < H < 1/2"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = verify_config(linear_clock(), json!({"kind": "log"}));
    cfg["run"]["n_pahts"] = json!(10);
    let out = run(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_pahts"));
}

#[test]
fn power_harnack_with_inverse_stable_clock_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let clock = json!({"kind": "inverse_subordinator", "bernstein": {"stable": {"alpha": 0.5, "scale": 1.0}}});
    let out = run(dir.path(), &verify_config(clock, json!({"kind": "power", "p": 2.0})), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inverse stable"));
    let r = report(dir.path());
    assert_eq!(r["diverged"], true);
    assert!(r["rhs"].is_null());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let cfg = json!({
        "task": "solve-sde",
        "model": iso_model(0.3, json!({"kind": "subordinator", "bernstein": {"stable": {"alpha": 0.6, "scale": 1.0}}}), contracting()),
        "run": {"n_paths": 64, "cells": 16, "paths_written": 3},
        "x": [0.5]
    });
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path(), &cfg, &["--threads", "1"]).status.code(), Some(0));
    assert_eq!(run(b.path(), &cfg, &["--threads", "4"]).status.code(), Some(0));
    for f in ["report.json", "paths.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.path().join("paths.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# task=solve-sde"));
    assert!(lines[1].starts_with("# config_sha256="));
    assert_eq!(lines[2], "# seed=0");
    assert_eq!(lines[3], "path,time,x0");
    assert_eq!(lines.len(), 4 + 3 * 17);
}

#[test]
fn deterministic_sweep_has_exact_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "exponent-sweep",
        "model": iso_model(0.25, linear_clock(), zero_drift()),
        "sweep": {"horizons": [0.25, 0.5, 1.0, 2.0, 4.0]}
    });
    let out = run(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert!((r["fitted_slope"].as_f64().unwrap() + 0.5).abs() < 1e-9);
    assert!((r["predicted_slope"].as_f64().unwrap() + 0.5).abs() < 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "T,factor,se"));
    assert!(csv.lines().any(|l| l.starts_with("1,") && l.ends_with(",0")));
}

#[test]
fn sweep_propagates_hypothesis_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "exponent-sweep",
        "model": iso_model(0.25, json!({"kind": "subordinator", "bernstein": {"gamma": {"shape": 1.0, "rate": 1.0}}}), zero_drift()),
        "sweep": {"horizons": [0.5, 1.0]}
    });
    let out = run(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hypothesis"));
}

#[test]
fn couple_meets_before_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "couple",
        "model": {"dim": 2, "drift": contracting(), "noise": {"hurst": [0.3], "clocks": [linear_clock()]}},
        "run": {"coupling_cells": 64},
        "x": [0.0, 0.0],
        "y": [0.6, -0.8]
    });
    let out = run(dir.path(), &cfg, &["--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["coupled"], true);
    assert!(r["tau"][0].as_f64().unwrap() <= 1.0);
    assert!(r["compensator"].as_f64().unwrap() <= r["compensator_bound"].as_f64().unwrap() * (1.0 + 1e-9));
    let csv = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "path,time,x0,x1,y0,y1"));
}

#[test]
fn moment_bounds_hold_for_inverse_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "task": "moment-bounds",
        "model": iso_model(0.3, json!({"kind": "inverse_subordinator", "bernstein": {"stable": {"alpha": 0.5, "scale": 1.0}}}), zero_drift()),
        "run": {"n_z_samples": 4000, "z_cells": 32},
        "moments": {"thetas": [0.2, 0.5], "times": [0.5, 1.0, 2.0]}
    });
    let out = run(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert!((r["sigma"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((r["c"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    for s in r["slopes"].as_array().unwrap() {
        assert!((s["fitted"].as_f64().unwrap() - s["predicted"].as_f64().unwrap()).abs() < 0.05);
    }
}

#[test]
fn simulate_tasks_write_paths() {
    for (task, col) in [("simulate-fbm", "w0"), ("simulate-clock", "z0")] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = json!({
            "task": task,
            "model": iso_model(0.3, json!({"kind": "subordinator", "bernstein": {"stable": {"alpha": 0.5, "scale": 1.0}}}), zero_drift()),
            "run": {"n_paths": 200, "cells": 8}
        });
        let out = run(dir.path(), &cfg, &[]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
        assert!(csv.lines().any(|l| l == format!("path,time,{col}")));
        assert_eq!(report(dir.path())["task"], task);
    }
}
