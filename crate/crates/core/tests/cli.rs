use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use tss::pipeline::{tss_select, RunManifest, RunReport};

fn tss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tss")).args(args).output().expect("spawn tss")
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_report(out: &Output) -> RunReport {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    RunReport::from_json(&String::from_utf8(out.stdout.clone()).unwrap()).unwrap()
}

#[test]
fn gcmi_cross_kernel_example() {
    // With dot similarity and identity target rows the cross kernel is the pool itself.
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "0.5,0.2\n0.1,0.4\n");
    let target = write(&dir, "t.csv", "1,0\n0,1\n");
    let out = tss(&[
        "select", "--method", "gcmi", "--budget", "1", "--unlabeled", arg(&pool), "--target", arg(&target),
        "--metric", "dot", "--transform", "none",
    ]);
    let report = stdout_report(&out);
    assert_eq!(report.selected, vec![0]);
    assert!((report.total_value - 1.4).abs() < 1e-12);
    assert!((report.gains[0] - 1.4).abs() < 1e-12);
}

#[test]
fn random_with_zero_budget() {
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "1,2\n3,4\n5,6\n");
    let report = stdout_report(&tss(&["select", "--method", "random", "--budget", "0", "--unlabeled", arg(&pool)]));
    assert!(report.selected.is_empty());
    assert_eq!(report.total_value, 0.0);
}

#[test]
fn empty_target_file_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "1,2\n3,4\n");
    let target = write(&dir, "t.csv", "");
    let out = tss(&["select", "--method", "fl2mi", "--budget", "1", "--unlabeled", arg(&pool), "--target", arg(&target)]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
}

#[test]
fn input_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let cases = ["1,2\n3\n", "1,nan\n", "1,x\n", ""];
    for (i, body) in cases.iter().enumerate() {
        let pool = write(&dir, &format!("bad{i}.csv"), body);
        let out = tss(&["select", "--method", "fl", "--budget", "1", "--unlabeled", arg(&pool)]);
        assert_eq!(out.status.code(), Some(2), "case {body:?}");
    }
    let missing = dir.path().join("missing.csv");
    assert_eq!(tss(&["select", "--method", "fl", "--budget", "1", "--unlabeled", arg(&missing)]).status.code(), Some(2));
}

#[test]
fn probabilities_that_do_not_sum_to_one_are_rejected() {
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "1,2\n3,4\n");
    let probs = write(&dir, "p.csv", "0.5,0.5\n0.5,0.4\n");
    let out = tss(&["select", "--method", "us", "--budget", "1", "--unlabeled", arg(&pool), "--probs", arg(&probs)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn us_without_probabilities_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "1,2\n3,4\n");
    let out = tss(&["select", "--method", "us", "--budget", "1", "--unlabeled", arg(&pool)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn indefinite_conditioned_kernel_exits_with_4() {
    // Pool equal to the target with eta = 2 makes the conditioned matrix negative definite.
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "1,0\n0,1\n");
    let out = tss(&[
        "select", "--method", "logdetmi", "--budget", "1", "--unlabeled", arg(&pool), "--target", arg(&pool), "--eta",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn report_reruns_to_itself() {
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "0.3,1.2,-0.5\n1.0,0.1,0.4\n-0.7,0.9,0.2\n0.5,0.5,0.5\n1.1,-0.3,0.8\n");
    let target = write(&dir, "t.csv", "1.0,0.0,0.3\n0.2,0.8,0.1\n");
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    let out = tss(&[
        "select", "--method", "logdetmi", "--budget", "3", "--unlabeled", arg(&pool), "--target", arg(&target),
        "--eta", "0.8", "--out", arg(&first),
    ]);
    assert!(out.status.success());
    assert!(tss(&["select", "--manifest", arg(&first), "--out", arg(&second)]).status.success());

    let a = RunReport::from_json(&fs::read_to_string(&first).unwrap()).unwrap();
    let b = RunReport::from_json(&fs::read_to_string(&second).unwrap()).unwrap();
    assert_eq!(RunReport { wall_time_ms: 0.0, ..a.clone() }, RunReport { wall_time_ms: 0.0, ..b });

    let direct = tss_select(&a.manifest).unwrap();
    assert_eq!(direct.selected, a.selected);
    assert_eq!(direct.total_value.to_bits(), a.total_value.to_bits());
}

#[test]
fn report_keys_are_sorted() {
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "1,2\n3,4\n5,7\n");
    let out = tss(&["select", "--method", "fl", "--budget", "2", "--unlabeled", arg(&pool)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let top: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \""))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    let mut sorted = top.clone();
    sorted.sort();
    assert_eq!(top, sorted);
    assert!(top.contains(&"manifest") && top.contains(&"wall_time_ms"));
}

#[test]
fn manifest_file_may_be_a_bare_manifest() {
    let dir = TempDir::new().unwrap();
    let pool = write(&dir, "u.csv", "1,2\n3,4\n5,7\n2,2\n");
    let manifest = write(
        &dir,
        "m.json",
        &format!(r#"{{"method": "badge", "budget": 2, "unlabeled": {:?}, "seed": 5}}"#, arg(&pool)),
    );
    let report = stdout_report(&tss(&["select", "--manifest", arg(&manifest)]));
    assert_eq!(report.selected.len(), 2);
    assert_eq!(report.manifest, RunManifest::load(&manifest).unwrap());
}

#[test]
fn experiment_subcommand_writes_a_report() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "cfg.json",
        r#"{"num_classes": 3, "feature_dim": 4, "rare_per_class": 3, "common_per_class": 15,
            "lake_size": 60, "target_set_size": 2, "test_per_class": 10, "budget": 6,
            "max_epochs": 50, "seeds": [1, 2], "methods": ["fl2mi", "random"]}"#,
    );
    let out_path = dir.path().join("report.json");
    let out = tss(&["experiment", "--config", arg(&config), "--out", arg(&out_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["entries"].as_array().unwrap().len(), 4);
    assert_eq!(report["summaries"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_experiment_field_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "cfg.json", r#"{"budgte": 5}"#);
    let out = tss(&["experiment", "--config", arg(&config), "--out", arg(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
}
