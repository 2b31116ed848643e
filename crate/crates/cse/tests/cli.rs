//! Exit-code and artifact contract of the command-line front end:
//! 0 success, 1 input error, 2 numerical failure, 3 verification failure.

mod common;

use std::path::Path;

fn setup(dir: &Path) -> String {
    let config = dir.join("tiny.json");
    common::write_config(&config, &common::tiny());
    config.to_str().unwrap().to_string()
}

fn solve(config: &str, out: &Path) {
    let output = common::run_cli(&["solve", "--config", config, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
}

#[test]
fn solve_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let out = dir.path().join("out");
    solve(&config, &out);
    for name in [
        "equilibrium.json",
        "policy.csv",
        "distribution.csv",
        "manifest.json",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let output = common::run_cli(&["verify", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("policy optimality"), "{stdout}");
    assert!(stdout.contains("walras residual"), "{stdout}");
}

#[test]
fn tampered_interest_rate_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let out = dir.path().join("out");
    solve(&config, &out);
    let eq_path = out.join("equilibrium.json");
    let mut doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&eq_path).unwrap()).unwrap();
    doc["prices_normalized"]["r"] = serde_json::json!(0.03);
    std::fs::write(&eq_path, serde_json::to_vec(&doc).unwrap()).unwrap();
    let output = common::run_cli(&["verify", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");
}

#[test]
fn missing_listed_output_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let out = dir.path().join("out");
    solve(&config, &out);
    std::fs::remove_file(out.join("policy.csv")).unwrap();
    let output = common::run_cli(&["verify", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("missing"), "{stderr}");
}

#[test]
fn mismatched_config_hash_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let out = dir.path().join("out");
    solve(&config, &out);
    let other = dir.path().join("other.json");
    common::write_config(&other, &common::benchmark());
    let output = common::run_cli(&[
        "verify",
        "--config",
        other.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("hash mismatch"), "{stderr}");
}

#[test]
fn boundary_gamma_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::tiny();
    cfg.utility.gamma = Some(1.0);
    let config = dir.path().join("bad.json");
    common::write_config(&config, &cfg);
    let output = common::run_cli(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("gamma"), "{stderr}");
}

#[test]
fn unreadable_config_path_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = common::run_cli(&[
        "solve",
        "--config",
        dir.path().join("nope.json").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
}

#[test]
fn unknown_spread_scheme_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let output = common::run_cli(&[
        "compare",
        "--config",
        &config,
        "--scheme",
        "bogus",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("split_point"), "{stderr}");
}

#[test]
fn zero_threads_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let output = common::run_cli(&[
        "solve",
        "--config",
        &config,
        "--threads",
        "0",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
}

#[test]
fn check_passes_on_the_tiny_economy() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let out = dir.path().join("out");
    let output = common::run_cli(&[
        "check",
        "--config",
        &config,
        "--samples",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(out.join("check.txt").exists());
    let text = std::fs::read_to_string(out.join("check.txt")).unwrap();
    assert!(text.contains("walras"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}
