use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use swipt_core::pareto::{dominance_audit, Frontier};

fn swipt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt")).args(args).output().expect("binary runs")
}

fn config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn frontier_json(path: &Path) -> Frontier {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    serde_json::from_value(v["frontier"].clone()).unwrap()
}

#[test]
fn frontier_writes_audited_outputs_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "{}");
    let out = dir.path().join("out");
    let o = swipt(&["frontier", "--config", &cfg, "--theta1-grid", "1e-2:1e2:4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("frontier_seed0.csv")).unwrap();
    for key in ["# config_sha256=", "# seed=0", "# version=", "# mode=adaptive"] {
        assert!(csv.contains(key), "missing {key}");
    }
    assert!(csv.contains("weight_label,ue,theta1,rate_bits,energy_uW,lambda,alpha,rank_min,power_residual,iters,status"));
    // Four grid points plus both extremes, two UEs each.
    assert_eq!(csv.lines().filter(|l| l.starts_with("w0")).count(), 12);
    let frontier = frontier_json(&out.join("frontier_seed0.json"));
    assert!(frontier.all_ok());
    assert!(dominance_audit(&frontier).iter().all(|v| v.magnitude() <= 1e-6));
    assert!(out.join("frontier_mean.csv").exists());
}

#[test]
fn fixed_mode_is_tagged_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"seed": 3}"#);
    let mut texts = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = swipt(&[
            "frontier", "--config", &cfg, "--mode", "fixed", "--alpha", "0.5", "--theta1-grid", "1e-1:1e1:2",
            "--draws", "1", "--seed", "7", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        texts.push(fs::read_to_string(out.join("frontier_seed7.csv")).unwrap());
        texts.push(fs::read_to_string(out.join("frontier_seed7.json")).unwrap());
    }
    assert!(texts[0].contains("# mode=fixed(0.5)"));
    assert_eq!(texts[0], texts[2]);
    assert_eq!(texts[1], texts[3]);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad = config(dir.path(), r#"{"n_ue": 2, "antennas_per_ap": [2]}"#);
    assert_eq!(swipt(&["frontier", "--config", &bad, "--out", out]).status.code(), Some(2));
    assert_eq!(swipt(&["frontier", "--config", "/nonexistent.json", "--out", out]).status.code(), Some(2));
    let good = config(dir.path(), "{}");
    assert_eq!(swipt(&["frontier", "--config", &good, "--mode", "fixed", "--out", out]).status.code(), Some(2));
    assert_eq!(
        swipt(&["frontier", "--config", &good, "--theta1-grid", "1:2", "--out", out]).status.code(),
        Some(2)
    );
    assert_eq!(swipt(&["validate", "--level", "thorough"]).status.code(), Some(2));
}

#[test]
fn distance_sweep_tabulates_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"d_max": 5}"#);
    let out = dir.path().join("out");
    let o = swipt(&[
        "distance-sweep", "--config", &cfg, "--d-values", "5,50", "--theta1-grid", "1e-1:1e1:2", "--draws", "2",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("frontier_D5_mean.csv").exists());
    assert!(out.join("frontier_D50_seed1.json").exists());
    let table = fs::read_to_string(out.join("nearest_ap_ratio.csv")).unwrap();
    let rows: Vec<Vec<f64>> = table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("ap_"))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r[2]) && (0.0..=1.0).contains(&r[3]));
    }
}

#[test]
fn fast_validation_passes() {
    let o = swipt(&["validate", "--level", "fast"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains("PASS")).count(), 3);
}
