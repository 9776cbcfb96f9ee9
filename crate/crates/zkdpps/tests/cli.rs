//! End-to-end checks of the compiled binary: exit codes, file outputs, and
//! config precedence, driven through real process invocations.

use std::fs;
use std::process::{Command, Output};

fn zkdpps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zkdpps"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn clean_run_writes_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("report.csv");
    let log = dir.path().join("ledger.log");
    let csv_s = csv.to_str().unwrap();
    let log_s = log.to_str().unwrap();

    let out = zkdpps(&[
        "run", "--scenario", "1", "--seed", "5", "--out", csv_s, "--dump-ledger", log_s,
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("hazmat-coverage"));
    assert!(stdout.contains("alert"), "12 crosses the alert threshold of 10");

    let csv_text = fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("scenario,mode,period_s,run,task_id"));
    assert_eq!(csv_text.lines().count(), 2, "header plus one task row");
    assert!(csv_text.lines().nth(1).unwrap().ends_with("verified"));

    let log_text = fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("# run 0"));
    assert!(log_text.contains("block 1 at=1000"));

    // identical invocation replays byte-identically
    let csv2 = dir.path().join("report2.csv");
    let out = zkdpps(&[
        "run", "--scenario", "1", "--seed", "5", "--out", csv2.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(csv_text, fs::read_to_string(&csv2).unwrap());
}

#[test]
fn byzantine_majority_run_exits_nonzero() {
    let out = zkdpps(&["run", "--byzantine-computers", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rejected"));
}

#[test]
fn invalid_flag_value_names_the_field() {
    let out = zkdpps(&["run", "--threshold", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{ "scenario": 2, "mode": "plain", "seed": 9 }"#).unwrap();

    let out = zkdpps(&["run", "--config", cfg.to_str().unwrap(), "--scenario", "3"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("scenario 3"), "flag beats file: {stdout}");
    assert!(stdout.contains("mode plain"), "file fills the gaps: {stdout}");
}

#[test]
fn bench_and_demo_subcommands_print_their_reports() {
    let out = zkdpps(&["bench", "--iters", "5"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("keygen"));
    assert!(stdout.contains("reconstruct"));

    let out = zkdpps(&["dkg-demo", "--validators", "4", "--threshold", "2"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("4 dealers, threshold 2"));
    assert_eq!(stdout.matches("dealer ").count(), 4);
    assert!(stdout.contains("all pass the group commitment check"));
}

#[test]
fn sweep_prints_the_ratio_table() {
    let out = zkdpps(&["sweep", "--runs", "4"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("period_s"));
    assert!(stdout.contains("ratio"));
    assert!(stdout.contains("0.5"));
    assert!(stdout.contains("10"));
}
