use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_elastoscat"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env_remove("ELASTOSCAT_OUT")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const CAPACITANCE: &str = r#"{"command": "capacitance", "shape": {"builtin": "sphere", "level": 3}}"#;

#[test]
fn capacitance_rerun_reuses_cache() {
    let tmp = TempDir::new().unwrap();
    let first = run(tmp.path(), CAPACITANCE, &[]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let s = stdout_json(&first);
    assert_eq!(s["state"], "computed");
    assert_eq!(s["capacitance_cache"], "miss");
    let out = tmp.path().join("out");
    let cached: Vec<_> = fs::read_dir(out.join("cache")).unwrap().collect();
    assert_eq!(cached.len(), 1);
    let report = fs::read(out.join("capacitance.json")).unwrap();

    let again = stdout_json(&run(tmp.path(), CAPACITANCE, &[]));
    assert_eq!(again["state"], "up_to_date");

    // without the report the command reruns, but from the cache
    fs::remove_file(out.join("capacitance.json")).unwrap();
    let third = stdout_json(&run(tmp.path(), CAPACITANCE, &[]));
    assert_eq!(third["state"], "computed");
    assert_eq!(third["capacitance_cache"], "hit");
    assert_eq!(fs::read(out.join("capacitance.json")).unwrap(), report);
}

#[test]
fn foldy_outputs_are_stamped_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{
        "command": "foldy",
        "shape": {"builtin": "sphere", "level": 2},
        "distribution": {"a": 0.0078125, "seed": 3}
    }"#;
    let first = run(tmp.path(), cfg, &["--plot-script"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let hash = stdout_json(&first)["config_hash"].as_str().unwrap().to_string();
    let out = tmp.path().join("out");
    let report = read_json(out.join("foldy.json"));
    let outputs: Vec<String> = report["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(outputs.contains(&"farfield.csv".to_string()));
    assert!(outputs.contains(&"plot_farfield.py".to_string()));
    let mut before = Vec::new();
    for name in &outputs {
        let bytes = fs::read(out.join(name)).unwrap();
        assert!(String::from_utf8_lossy(&bytes).contains(&hash), "{name} lacks the config hash");
        before.push(bytes);
    }

    let forced = run(tmp.path(), cfg, &["--plot-script", "--force"]);
    assert_eq!(stdout_json(&forced)["state"], "computed");
    for (name, bytes) in outputs.iter().zip(&before) {
        assert_eq!(&fs::read(out.join(name)).unwrap(), bytes, "{name} changed on recomputation");
    }
}

#[test]
fn seed_flag_changes_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"command": "foldy", "distribution": {"a": 0.015625}}"#;
    let a = stdout_json(&run(tmp.path(), cfg, &["--dry-run"]));
    let b = stdout_json(&run(tmp.path(), cfg, &["--dry-run", "--seed", "99"]));
    assert_eq!(a["status"], "plan");
    assert!(!a["steps"].as_array().unwrap().is_empty());
    assert_ne!(a["config_hash"], b["config_hash"]);
    assert!(!tmp.path().join("out").join("foldy.json").exists());
}

#[test]
fn low_t_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"command": "foldy", "distribution": {"a": 0.001, "t": 0.2}}"#;
    let out = run(tmp.path(), cfg, &[]);
    assert_eq!(out.status.code(), Some(4));
    let e = stdout_json(&out);
    assert_eq!(e["status"], "error");
    assert_eq!(e["kind"], "infeasible");
    assert!(e["message"].as_str().unwrap().contains("packing bound"));
}

#[test]
fn schema_violations_exit_2() {
    let tmp = TempDir::new().unwrap();
    for cfg in [
        r#"{"command": "foldy""#,
        r#"{"command": "foldy", "distribution": {"a": 0.01}, "colour": 1}"#,
        r#"{"command": "melt"}"#,
        r#"{"command": "effective", "tolerances": {"ls": -1}}"#,
        r#"{"command": "capacitance", "shape": {"mesh": "missing.json"}}"#,
    ] {
        let out = run(tmp.path(), cfg, &[]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
        assert_eq!(stdout_json(&out)["kind"], "schema");
    }
}

#[test]
fn sweep_report_has_slope() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{
        "command": "sweep",
        "grid_n": 8,
        "sweep": {"a_values": [0.015625, 0.0078125, 0.00390625, 0.001953125]}
    }"#;
    let out = run(tmp.path(), cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(tmp.path().join("out").join("sweep.json"));
    assert!(report["slope"].as_f64().unwrap().is_finite());
    assert!(report["artifact"]["config_hash"].is_string());
}

#[test]
fn negative_density_scenario() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{
        "command": "scenario",
        "scenario": {"name": "negative_density", "k_plus_1": 2, "c0": [[3, 0, 0], [0, 2, 0], [0, 0, 1]]}
    }"#;
    let out = run(tmp.path(), cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(tmp.path().join("out").join("scenario.json"));
    assert_eq!(report["command"], "scenario");
}
