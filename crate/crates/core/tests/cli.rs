use std::path::Path;
use std::process::{Command, Output};

use arsysid::harness::read_csv;
use arsysid::io::{read_blocks, read_dataset, read_model};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arsysid"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("ARSYSID_WORKERS").output().expect("spawn arsysid")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_zero_model() {
    let out = run(&["analyze", "--zero", "--p", "2", "--d", "3", "--horizon", "10"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kappa"].as_f64().unwrap(), 1.0);
    assert_eq!(v["stability"], "strictly_stable");
}

#[test]
fn validate_quick_passes() {
    let out = run(&["validate", "--quick"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS") && !text.contains("FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["analyze", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--preset", "nope", "--out", "x.csv"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn desk_sweep_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    let svg = dir.path().join("results.svg");
    let out = run(&["sweep", "--preset", "appendix-e-desk", "--out", path(&csv), "--plot", path(&svg), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read_csv(&csv).unwrap();
    // 12 cells × 3 seeds plus one mean row per cell.
    assert_eq!(table.len(), 48);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));

    let again = dir.path().join("again.csv");
    assert!(run(&["sweep", "--preset", "appendix-e-desk", "--out", path(&again)]).status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&again).unwrap());

    let replot = dir.path().join("replot.svg");
    let out = run(&["plot", "--input", path(&csv), "--out", path(&replot), "--axis", "beta_tilde_over_gamma"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    std::fs::write(&cfg, r#"{"d": [2], "p": [1], "N": [2], "T_multipliers": [5, 10], "seeds": [4]}"#).unwrap();
    let csv = dir.path().join("out.csv");
    let out = run(&["sweep", "--config", path(&cfg), "--out", path(&csv), "--seeds", "1,2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read_csv(&csv).unwrap();
    assert_eq!(table.raw().count(), 4);
    assert!(table.raw().all(|r| matches!(r.seed, Some(1) | Some(2))));
}

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    let out = run(&[
        "simulate", "--p", "2", "--d", "2", "--truth-seed", "5", "-n", "4", "-t", "200", "--seed", "9",
        "--out", path(&data), "--model-out", path(&model),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = read_dataset(&data).unwrap();
    assert_eq!((ds.num_seqs, ds.horizon, ds.dim), (4, 200, 2));
    assert!(dir.path().join("data.csv.json").exists());
    let truth = read_model(&model).unwrap();

    let report = dir.path().join("report.json");
    let blocks = dir.path().join("blocks.csv");
    let out = run(&[
        "fit", "--data", path(&data), "--estimator", "ols", "--p-student", "2", "--truth", path(&model),
        "--out", path(&report), "--blocks-out", path(&blocks),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["p_student"], 2);
    assert_eq!(v["certificate_vs_truth"], true);
    let fitted = read_blocks(&blocks).unwrap();
    let err: f64 = fitted.iter().zip(&truth.blocks).map(|(a, b)| (a - b).norm_squared()).sum();
    assert!(err < 0.1, "{err}");

    let out = run(&[
        "fit", "--data", path(&data), "--estimator", "iht_low_rank", "--p-student", "2", "--rank", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kind"], "iht_low_rank");

    // Missing rank is a usage error.
    assert_eq!(run(&["fit", "--data", path(&data), "--estimator", "iht_low_rank"]).status.code(), Some(1));
}
