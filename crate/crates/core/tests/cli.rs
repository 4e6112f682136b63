use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use openset_bank::experiment::CSV_HEADER;

const BIN: &str = env!("CARGO_BIN_EXE_openset-bank");

const SMALL: &str = r#"{
  "iterations": 6,
  "eval_every": 3,
  "snapshot_every": 2,
  "spec": { "dim": 16, "num_base_classes": 3, "num_novel_classes": 1 }
}"#;

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let status = cli(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 2 + 1);
    assert!(lines[3].starts_with("final,"));

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["iterations"], 6);
    for t in [2, 4, 6] {
        assert!(out.join(format!("bank_{t}.json")).exists(), "bank_{t}.json");
    }
    assert!(!out.join("bank_3.json").exists());
}

#[test]
fn same_seed_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let read = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = cli(&["run", "--config", &config, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success());
        fs::read_to_string(out.join("metrics.csv")).unwrap()
    };
    assert_eq!(read("a", "7"), read("b", "7"));
}

#[test]
fn report_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    assert!(cli(&["run", "--config", &config, "--out", out_s]).status.success());

    let o = cli(&["report", "--out", out_s]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    assert_eq!(report["final"]["iter"], "final");

    let snap = out.join("bank_6.json");
    let o = cli(&["inspect-bank", "--snapshot", snap.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("base classes: 3"));
    assert!(text.contains("class 3"));
}

#[test]
fn bad_inputs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{ "iterations": 2, "bogus": 1 }"#);
    let out = dir.path().join("run");
    let o = cli(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let snap = dir.path().join("broken.json");
    fs::write(&snap, "{ not a bank").unwrap();
    let o = cli(&["inspect-bank", "--snapshot", snap.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let config = write_config(dir.path(), r#"{ "iterations": 2 }"#);
    let o = cli(&["run", "--config", &config]);
    assert_eq!(o.status.code(), Some(2));
}
