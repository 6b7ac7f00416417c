use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mdal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdal")).args(args).output().expect("spawn mdal")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn write(path: &Path, value: serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
}

fn synthetic() -> serde_json::Value {
    serde_json::json!({
        "domains": [
            {"name": "a", "size": 200},
            {"name": "b", "shift": 1.0, "size": 120},
            {"name": "c", "shift": 3.0, "flip": 0.3, "size": 120}
        ],
        "classes": 3,
        "dim": 6,
        "seed": 5
    })
}

fn run_config(methods: &[&str]) -> serde_json::Value {
    serde_json::json!({
        "synthetic": synthetic(),
        "methods": methods,
        "targets": ["a"],
        "budgets": [30],
        "seeds": [1],
        "harness": {
            "sizes": {"train": 20, "dev": 60, "test": 100},
            "grid": {"lrs": [0.01], "epochs": [20], "accumulations": [1]}
        },
        "distance": {"sample_size": 100, "projections": 32}
    })
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn gen_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synthetic.json");
    write(&cfg, synthetic());
    let out = dir.path().join("data");
    let g = mdal(&["gen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&g), 0, "{}", String::from_utf8_lossy(&g.stderr));
    assert!(out.join("examples.jsonl").exists());
    assert!(out.join("dataset.json").exists());
    let v = mdal(&["validate", out.to_str().unwrap()]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stderr));
    let v = mdal(&["validate", out.join("examples.jsonl").to_str().unwrap(), "--classes", "3"]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn binary_sidecar_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synthetic.json");
    write(&cfg, synthetic());
    let out = dir.path().join("data");
    assert_eq!(code(&mdal(&["gen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--binary"])), 0);
    assert_eq!(code(&mdal(&["validate", out.to_str().unwrap()])), 0);
}

#[test]
fn validate_rejects_out_of_range_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synthetic.json");
    write(&cfg, synthetic());
    let out = dir.path().join("data");
    assert_eq!(code(&mdal(&["gen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let v = mdal(&["validate", out.join("examples.jsonl").to_str().unwrap(), "--classes", "2"]);
    assert_eq!(code(&v), 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mdal(&["run", "--out", "/tmp/x"])), 1);
    assert_eq!(code(&mdal(&["run", "--config", "c.json", "--out", "o", "--bogus"])), 1);
    assert_eq!(code(&mdal(&["frobnicate"])), 1);
}

#[test]
fn missing_config_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = mdal(&["run", "--config", missing.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let mut v = run_config(&["random"]);
    v["budgetz"] = serde_json::json!([1]);
    write(&cfg, v);
    let out = mdal(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn run_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    write(&cfg, run_config(&["random", "entr-up"]));
    let run_dir = dir.path().join("run");
    let r = mdal(&["run", "--config", cfg.to_str().unwrap(), "--out", run_dir.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["scores.csv", "errors.csv", "cells.jsonl", "manifest.json", "rankings/index.csv"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let scores = read_csv(&run_dir.join("scores.csv"));
    assert_eq!(scores.len(), 3);

    let a = mdal(&["analyze", run_dir.to_str().unwrap()]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let tau = read_csv(&run_dir.join("analysis/tau.csv"));
    assert_eq!(tau.len(), 3);
    assert_eq!(&tau[0][1..], ["random", "entr-up"]);
    for (i, row) in tau.iter().enumerate().skip(1) {
        assert_eq!(row[i].parse::<f64>().unwrap(), 1.0);
    }
    assert_eq!(tau[1][2], tau[2][1]);
    let w = read_csv(&run_dir.join("analysis/wasserstein.csv"));
    assert_eq!(w.len(), 2);
    assert!(run_dir.join("analysis/distance_vs_improvement.csv").exists());
}

#[test]
fn rank_writes_a_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    write(&cfg, run_config(&["dal-t"]));
    let out = dir.path().join("rank/dal-t.csv");
    let r = mdal(&["rank", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--method", "dal-t", "--target", "a"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let rows = read_csv(&out);
    assert_eq!(rows.len(), 1 + 240);
}

#[test]
fn partial_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let mut v = run_config(&["random", "rca"]);
    v["budgets"] = serde_json::json!([30, 100000]);
    write(&cfg, v);
    let run_dir = dir.path().join("run");
    let r = mdal(&["run", "--config", cfg.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(read_csv(&run_dir.join("scores.csv")).len(), 1 + 2);
    assert_eq!(read_csv(&run_dir.join("errors.csv")).len(), 1 + 2);
}
