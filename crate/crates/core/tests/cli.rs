//! End-to-end checks of the command-line interface: artifact schemas,
//! byte-identical reproducibility, config files, and exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ridgevar"))
}

#[test]
fn rates_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "rates",
            "--dim",
            "2",
            "--m",
            "8,16,32,64",
            "--atoms",
            "60",
            "--trials",
            "4",
            "--seed",
            "7",
            "--mc-samples",
            "30000",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let lines: Vec<&str> = csv.trim_end().split("\r\n").collect();
    assert_eq!(lines[0], "n,error,stderr,seed");
    assert_eq!(lines.len(), 5, "expected 4 data rows, got {csv}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rates.json")).unwrap())
            .unwrap();
    assert_eq!(json["target_slope"].as_f64().unwrap(), -1.25);
    assert!(json["slope"].as_f64().unwrap() < 0.0);
    assert_eq!(json["config"]["seed"].as_u64().unwrap(), 7);
}

#[test]
fn identical_configs_give_byte_identical_csv() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let status = bin()
            .args([
                "approximate-atom",
                "--dim",
                "2",
                "--m",
                "8,16,32",
                "--t",
                "0.5",
                "--seed",
                "11",
                "--mc-samples",
                "20000",
                "--out",
            ])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir_a.path().join("approximate-atom.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("approximate-atom.csv")).unwrap();
    assert_eq!(a, b, "CSV bodies differ between identical runs");
}

#[test]
fn worker_count_does_not_change_results() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(&dir_a, "1"), (&dir_b, "4")] {
        let status = bin()
            .args([
                "maurey",
                "--atoms",
                "40",
                "--n-list",
                "4,16",
                "--seeds",
                "3",
                "--trials",
                "4",
                "--seed",
                "3",
                "--mc-samples",
                "20000",
                "--workers",
                workers,
                "--out",
            ])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir_a.path().join("maurey.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("maurey.csv")).unwrap();
    assert_eq!(a, b, "results depend on the worker count");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        "# experiment configuration\ndim = 2\nm = 8,16,32\nt = 0.5\nseed = 13\nmc_samples = 20000\n",
    )
    .unwrap();
    let out_a = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["approximate-atom", "--config"])
        .arg(&cfg_path)
        .args(["--out"])
        .arg(out_a.path())
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_a.path().join("approximate-atom.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["config"]["seed"].as_u64().unwrap(), 13);

    // an explicit flag overrides the file
    let out_b = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["approximate-atom", "--config"])
        .arg(&cfg_path)
        .args(["--seed", "21", "--out"])
        .arg(out_b.path())
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_b.path().join("approximate-atom.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["config"]["seed"].as_u64().unwrap(), 21);
}

#[test]
fn seed_env_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "norms",
            "--dim",
            "2",
            "--t-grid=-0.5:0.5:5",
            "--out",
        ])
        .arg(dir.path())
        .env("RIDGEVAR_SEED", "4242")
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("norms.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["seed"].as_u64().unwrap(), 4242);
}

#[test]
fn norms_emits_one_row_per_offset() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["norms", "--dim", "3", "--t-grid", "0:0.999:50", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("norms.csv")).unwrap();
    assert_eq!(csv.trim_end().split("\r\n").count(), 51);
}

#[test]
fn unknown_command_exits_with_usage() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("Usage"), "no usage text in: {msg}");
}

#[test]
fn invalid_config_reports_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "this line has no equals sign\n").unwrap();
    let out = bin()
        .args(["norms", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("key = value"), "unhelpful message: {msg}");
}
