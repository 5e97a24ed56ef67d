use std::path::Path;
use std::process::{Command, Output};

fn narrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narrate")).args(args).env_remove("NARRATE_SEED").output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn small_config(dir: &Path, data: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "data": {"path": data},
        "tokenizer": {"k": 8, "d": 8},
        "retrieval": {"pool_size": 10},
        "splits": [{"mode": "XS", "held_out_subject": "p00"}],
        "seed": 5
    });
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn synth_then_validate_fit_and_tokenize() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_s = data.to_str().unwrap();
    ok(&narrate(&["synth", "--subjects", "2", "--positions", "2", "--segments", "3", "--seed", "4", "--out", data_s]));
    assert!(data.join("ground_truth.jsonl").is_file());
    let out = narrate(&["validate", data_s]);
    ok(&out);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["segments"], 6);

    let codebook = tmp.path().join("codebook.json");
    let params = tmp.path().join("params.json");
    std::fs::write(&params, r#"{"k": 8, "d": 8}"#).unwrap();
    ok(&narrate(&[
        "fit", "--dataset", data_s, "--params", params.to_str().unwrap(), "--out", codebook.to_str().unwrap(),
    ]));
    let out = narrate(&["tokenize", "--dataset", data_s, "--codebook", codebook.to_str().unwrap()]);
    ok(&out);
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 12);
    for line in &lines {
        assert!(line["segment_id"].is_string());
        assert!(line["tokens"].as_array().unwrap().iter().all(|t| (1..=8).contains(&t.as_u64().unwrap())));
    }
}

#[test]
fn missing_config_fails_with_a_json_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = narrate(&["eval", "--config", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let err: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(err["path"], missing.to_str().unwrap());
    assert!(!err["error"].as_str().unwrap().is_empty());
}

#[test]
fn invalid_dataset_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = narrate(&["validate", tmp.path().join("absent").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent"));
}

#[test]
fn eval_and_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&narrate(&["synth", "--subjects", "3", "--segments", "6", "--seed", "6", "--out", data.to_str().unwrap()]));
    let cfg = small_config(tmp.path(), &data);
    let run = tmp.path().join("run");
    ok(&narrate(&["eval", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]));
    assert!(run.join("report.json").is_file() && run.join("report.txt").is_file());
    let out = narrate(&["report", run.to_str().unwrap()]);
    ok(&out);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), std::fs::read_to_string(run.join("report.txt")).unwrap());
}

#[test]
fn sweep_writes_one_report_per_value_and_a_trend() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&narrate(&["synth", "--subjects", "3", "--segments", "6", "--seed", "6", "--out", data.to_str().unwrap()]));
    let cfg = small_config(tmp.path(), &data);
    let out_dir = tmp.path().join("sweep");
    ok(&narrate(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--axis", "K", "--values", "4,8", "--out", out_dir.to_str().unwrap(),
    ]));
    for v in ["K=4", "K=8"] {
        assert!(out_dir.join(v).join("report.json").is_file(), "{v}");
    }
    let trend: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("trend.json")).unwrap()).unwrap();
    let first = &trend[0];
    assert_eq!(first["axis"], "K");
    assert_eq!(first["values"].as_array().unwrap().len(), 2);
    assert_eq!(first["metrics"]["js"]["means"].as_array().unwrap().len(), 2);
}
