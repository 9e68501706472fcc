// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::process::Command;

use wisent::fixture::firmware;

fn wisent() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wisent"))
}

#[test]
fn simulate_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fw.hex"), firmware().to_hex_string()).unwrap();
    let config = dir.path().join("static.conf");
    fs::write(
        &config,
        "# fixed distance, full payload\nhex = fw.hex\npayload = 16\ndistance_cm = 20\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = wisent()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--seed", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("0,true,"));
    assert_eq!(String::from_utf8(status.stdout).unwrap(), summary);
    assert!(out.join("run_0_log.csv").exists());
    assert_eq!(fs::metadata(out.join("run_0_fram.bin")).unwrap().len(), 0x1_0000);
}

#[test]
fn failed_transfer_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("far.conf");
    fs::write(&config, "fixture = random\ndistance_cm = 1000\n").unwrap();
    let status = wisent().args(["simulate", "--config"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    fs::write(&config, "fixture = firmware\nocv = 30\n").unwrap();
    let output = wisent().args(["simulate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("OCV"));

    let status = wisent()
        .args(["simulate", "--config"])
        .arg(dir.path().join("missing.conf"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn model_prints_four_values() {
    let output = wisent()
        .args(["model", "--distance", "20", "--words", "1"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("psi_t = 148.2112"));
    assert!(text.contains("eta = 0.9310"));
    assert_eq!(text.lines().count(), 4);

    let status = wisent()
        .args(["model", "--distance", "70", "--words", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn checksum_validates_records() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.hex");
    fs::write(&good, ":02AADD00BBCCF0\n:00000001FF\n").unwrap();
    let output = wisent().arg("checksum").arg(&good).output().unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("ok: 1 records, 2 bytes"));

    let bad = dir.path().join("bad.hex");
    fs::write(&bad, ":02AADD00BBCCF1\n:00000001FF\n").unwrap();
    let output = wisent().arg("checksum").arg(&bad).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
