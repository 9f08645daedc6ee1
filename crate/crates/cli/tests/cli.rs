//! End-to-end CLI contract: verbs, exit codes, artifact files, determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_meanfield")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mf_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn smoke_toml(out: &Path) -> String {
    format!(
        r#"
schema_version = 1
kind = "simulate"

[particles]
n = 8
epsilon = 0.1
t_final = 0.01
outputs = 4

[seeds]
base = 7
count = 2

[output]
dir = "{}"
"#,
        out.display()
    )
}

#[test]
fn run_smoke_produces_manifest_and_diagnostics() {
    let dir = temp_dir("smoke");
    let out = dir.join("results");
    let config = write_config(&dir, &smoke_toml(&out));
    let status = Command::new(bin())
        .args(["run", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("manifest.json").exists());
    assert!(out.join("diagnostics_seed7.csv").exists());
    assert!(out.join("balance.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["kind"], "simulate");
    assert_eq!(manifest["schema_version"], 1);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn rerun_is_byte_identical_modulo_manifest() {
    let dir = temp_dir("determinism");
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let config = write_config(&dir, &smoke_toml(&out_a));
    for (out, workers) in [(&out_a, "1"), (&out_b, "2")] {
        let status = Command::new(bin())
            .args(["run", "--config"])
            .arg(&config)
            .args(["--out"])
            .arg(out)
            .args(["--workers", workers])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["diagnostics_seed7.csv", "diagnostics_seed8.csv", "balance.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn invalid_dt_exits_2_and_names_the_rule() {
    let dir = temp_dir("baddt");
    let out = dir.join("results");
    let toml = smoke_toml(&out).replace("t_final = 0.01", "t_final = 0.01\ndt = 0.5");
    let config = write_config(&dir, &toml);
    let output = Command::new(bin())
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("πε³"), "stderr must name the rule: {stderr}");
}

#[test]
fn validate_accepts_good_and_rejects_bad() {
    let dir = temp_dir("validate");
    let out = dir.join("results");
    let good = write_config(&dir, &smoke_toml(&out));
    assert!(Command::new(bin())
        .args(["validate", "--config"])
        .arg(&good)
        .status()
        .unwrap()
        .success());
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\nkind = \"simulate\"\n").unwrap();
    let output = Command::new(bin())
        .args(["validate", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_config_exits_4() {
    let output = Command::new(bin())
        .args(["run", "--config", "/nonexistent/nope.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn report_on_simulate_results_emits_criteria() {
    let dir = temp_dir("report");
    let out = dir.join("results");
    // a few more seeds so SE bands are meaningful
    let toml = smoke_toml(&out).replace("count = 2", "count = 8");
    let config = write_config(&dir, &toml);
    assert!(Command::new(bin())
        .args(["run", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    let output = Command::new(bin())
        .args(["report", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("criterion 3"), "stdout: {stdout}");
    assert!(out.join("summary.csv").exists());
    assert!(out.join("acceptance.csv").exists());
}

#[test]
fn report_on_missing_dir_exits_2() {
    let output = Command::new(bin())
        .args(["report", "--out", "/nonexistent/results"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn seed_offset_shifts_output_seeds() {
    let dir = temp_dir("offset");
    let out = dir.join("results");
    let config = write_config(&dir, &smoke_toml(&out));
    assert!(Command::new(bin())
        .args(["run", "--config"])
        .arg(&config)
        .args(["--seed-offset", "100"])
        .status()
        .unwrap()
        .success());
    assert!(out.join("diagnostics_seed107.csv").exists());
    assert!(out.join("diagnostics_seed108.csv").exists());
}
