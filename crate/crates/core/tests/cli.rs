use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kernreg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, value: serde_json::Value) -> PathBuf {
    let path = dir.join("config.in.json");
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

fn small_checks(c_tilde: f64) -> serde_json::Value {
    json!({
        "spectrum": { "n_terms": 41 },
        "constants": { "c_tilde": c_tilde },
        "checks": {
            "fixed_point_log2_n": [10, 14],
            "approx_octaves": 16,
            "gaussian_log2_n": [6, 7],
            "gaussian_log10_x": [-2, 0],
            "draws": 100,
            "sudakov_log2_n": [4, 6],
            "sudakov_terms": 257,
            "isomorphism_n": 48,
            "isomorphism_trials": 100,
            "inclusion_samples": 100,
            "moment_family": 100,
            "moment_terms": [41, 81],
            "peeling_terms": 20
        }
    })
}

fn small_rates() -> serde_json::Value {
    json!({
        "spectrum": { "n_terms": 41 },
        "n_grid": [32, 64, 128],
        "seeds": 3,
        "calibration": { "pilot_n": [32, 64], "seeds": 2, "per_decade": 1 }
    })
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn checks_are_byte_identical_across_jobs_and_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small_checks(1.0));
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "8", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let o = run(&["checks", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        let code = o.status.code().unwrap();
        assert!(code == 0 || code == 1, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((code, read(&out, "checks.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.lines().count() >= 10);
}

#[test]
fn broken_constant_keeps_slope_but_fails_level() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small_checks(1e-6));
    let out = tmp.path().join("out");
    let o = run(&["checks", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let bytes = read(&out, "checks.csv");
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let pass = |name: &str| {
        rows.iter()
            .find(|r| &r[1] == name)
            .map(|r| &r[5] == "true")
            .unwrap_or_else(|| panic!("row {name} missing"))
    };
    assert!(pass("fixed_point_slope"));
    assert!(!pass("fixed_point_level"));
}

#[test]
fn rates_are_byte_identical_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small_rates());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, jobs) in [(&a, "1"), (&b, "8")] {
        let o = run(&["rates", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["rates.csv", "slopes.csv", "cells.csv", "predictions.csv", "calibration.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs");
    }
    let rates = String::from_utf8(read(&a, "rates.csv")).unwrap();
    let header = rates.lines().next().unwrap();
    assert!(header.starts_with("config_hash,kind,n,mean_excess"));
    let hash = rates.lines().nth(1).unwrap().split(',').next().unwrap();
    assert!(rates.lines().skip(1).all(|l| l.starts_with(hash)));

    let svg = tmp.path().join("plot.svg");
    let o = run(&["plot", a.join("rates.csv").to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 3);
}

#[test]
fn seed_override_changes_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small_rates());
    let mut hashes = Vec::new();
    for seed in ["1", "2"] {
        let dir = tmp.path().join(seed);
        let o = run(&["rates", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success());
        let rates = String::from_utf8(read(&dir, "rates.csv")).unwrap();
        hashes.push(rates.lines().nth(1).unwrap().split(',').next().unwrap().to_string());
    }
    assert_ne!(hashes[0], hashes[1]);
}

#[test]
fn plot_rejects_empty_and_malformed_input() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(
        &empty,
        "config_hash,kind,n,mean_excess,std_excess,stderr_excess,completed,seeds,kappa1,predicted_slope\n",
    )
    .unwrap();
    assert_eq!(run(&["plot", empty.to_str().unwrap()]).status.code(), Some(2));
    let junk = tmp.path().join("junk.csv");
    std::fs::write(&junk, "hello\nworld\n").unwrap();
    assert_eq!(run(&["plot", junk.to_str().unwrap()]).status.code(), Some(2));
    let missing = tmp.path().join("missing.csv");
    assert_eq!(run(&["plot", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["rates", "--jobs", "many"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), json!({ "colour": "blue" }));
    assert_eq!(run(&["checks", "--config", unknown.to_str().unwrap()]).status.code(), Some(2));
    let decreasing = write_config(tmp.path(), json!({ "n_grid": [128, 64] }));
    assert_eq!(run(&["rates", "--config", decreasing.to_str().unwrap()]).status.code(), Some(2));
    let no_seeds = write_config(tmp.path(), json!({ "seeds": 0 }));
    assert_eq!(run(&["rates", "--config", no_seeds.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn default_config_round_trips() {
    let o = run(&["config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = kernreg::experiment::ExperimentConfig::from_json(&text).unwrap();
    assert_eq!(cfg, kernreg::experiment::ExperimentConfig::default());
}
