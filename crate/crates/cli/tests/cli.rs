use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn ocelgan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocelgan")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.lines().last().unwrap()).unwrap()
}

#[test]
fn toy_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = ocelgan(&["generate", "--toy", "12", "--gap", "900", "--out", "toy.json"], dir.path());
    assert!(out.status.success());

    let stats = stdout_json(&ocelgan(&["stats", "--log", "toy.json", "--json"], dir.path()));
    assert_eq!(stats[0]["object_type"], "case");
    assert_eq!(stats[0]["count"], 12);
    assert_eq!(stats[0]["raw_cases"], 12);
    assert_eq!(stats[0]["mean_len"], 4.0);
    assert_eq!(stats[0]["mean_dur"], 3.0 * 900.0);

    let table = ocelgan(&["stats", "--log", "toy.json"], dir.path());
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("case") && l.contains("4.00")), "{text}");

    let rel = stdout_json(&ocelgan(&["relations", "--log", "toy.json", "--json"], dir.path()));
    assert_eq!(rel, json!({ "case": ["a", "b", "c", "d"] }));
}

#[test]
fn generated_log_has_packages_with_weight() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gen.json"), r#"{"seed": 3, "num_orders": 30}"#).unwrap();
    assert!(ocelgan(&["generate", "--config", "gen.json", "--out", "log.json"], dir.path()).status.success());
    let stats = stdout_json(&ocelgan(&["stats", "--log", "log.json", "--object-type", "packages", "--json"], dir.path()));
    assert_eq!(stats.as_array().unwrap().len(), 1);
    let rel = stdout_json(&ocelgan(&["relations", "--log", "log.json", "--json"], dir.path()));
    assert!(rel["packages"].as_array().unwrap().contains(&json!("create package")));
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = ocelgan(&["stats", "--log", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["code"], "io");

    std::fs::write(dir.path().join("bad.json"), "{").unwrap();
    let out = ocelgan(&["stats", "--log", "bad.json"], dir.path());
    assert_eq!(stderr_error(&out)["code"], "malformed_json");

    let out = ocelgan(&["generate", "--toy", "0", "--out", "x.json"], dir.path());
    assert_eq!(stderr_error(&out)["code"], "invalid_config");

    let out = ocelgan(&["stats"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["code"], "usage");

    assert!(ocelgan(&["generate", "--toy", "5", "--out", "toy.json"], dir.path()).status.success());
    let out = ocelgan(&["train", "--log", "toy.json", "--object-type", "case", "--attrs", "colour"], dir.path());
    let err = stderr_error(&out);
    assert_eq!(err["code"], "unknown_attribute");
    assert_eq!(err["details"]["field"], "attrs");
}

#[test]
fn train_eval_predict_on_the_toy_process() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    assert!(ocelgan(&["generate", "--toy", "200", "--gap", "600", "--out", "toy.json"], cwd).status.success());
    let out = ocelgan(&["train", "--log", "toy.json", "--object-type", "case", "--epochs", "50", "--seed", "0", "--out", "m"], cwd);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["params.bin", "model.json", "history.csv", "source.json"] {
        assert!(cwd.join("m").join(f).exists(), "{f} missing");
    }

    let report = stdout_json(&ocelgan(&["eval", "--model", "m", "--log", "toy.json", "--json", "--out", "full.json"], cwd));
    let s = report["mean_similarity"].as_f64().unwrap();
    let mae = report["mae_normalized"].as_f64().unwrap();
    assert!(s >= 0.95 && mae <= 0.05, "S {s} MAE {mae}");
    let full: Value = serde_json::from_slice(&std::fs::read(cwd.join("full.json")).unwrap()).unwrap();
    assert_eq!(full["pairs"].as_array().unwrap().len() as u64, report["num_pairs"].as_u64().unwrap());

    let prefix = json!({
        "object_type": "case",
        "events": [{ "activity": "a", "timestamp": "2021-01-04 08:00:00", "object-id": "case00001" }],
    });
    std::fs::write(cwd.join("prefix.json"), prefix.to_string()).unwrap();
    let resp = stdout_json(&ocelgan(&["predict", "--model", "m", "--prefix", "prefix.json", "--json"], cwd));
    let acts: Vec<&str> = resp["suffix"].as_array().unwrap().iter().map(|e| e["activity"].as_str().unwrap()).collect();
    assert_eq!(acts, ["b", "c", "d"]);

    let unknown = json!({ "object_type": "case", "events": [{ "activity": "z", "timestamp": "2021-01-04 08:00:00" }] });
    std::fs::write(cwd.join("bad.json"), unknown.to_string()).unwrap();
    let out = ocelgan(&["predict", "--model", "m", "--prefix", "bad.json"], cwd);
    assert_eq!(stderr_error(&out)["code"], "unknown_activity");
}
