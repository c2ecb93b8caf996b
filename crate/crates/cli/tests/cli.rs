use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "synth:dim=16,n=10,sep=8,seed=0";

fn qcnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcnn")).current_dir(dir).args(args).output().expect("spawn qcnn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = qcnn(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn unknown_ansatz_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcnn(dir.path(), &["train", "--ansatz", "a10-pool", "--data", SMALL]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a10-pool"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qcnn(dir.path(), &["train", "--epochs", "many"]).status.code(), Some(2));
    assert_eq!(qcnn(dir.path(), &["train", "--noise", "dephase", "--data", SMALL]).status.code(), Some(2));
    assert_eq!(qcnn(dir.path(), &["train", "--lr", "-1", "--data", SMALL]).status.code(), Some(2));
    assert_eq!(qcnn(dir.path(), &["train", "--data", "missing.csv"]).status.code(), Some(2));
    assert_eq!(qcnn(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn malformed_data_file_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "label,f0,f1\n0,1,2\n1,x,3\n").unwrap();
    let out = qcnn(dir.path(), &["train", "--data", "bad.csv", "--epochs", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn train_writes_report_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["train", "--data", SMALL, "--epochs", "2", "--batch-size", "4", "--seed", "3"];
    let line = ok(dir.path(), &[&args[..], &["--out", "a.json"]].concat());
    assert!(line.starts_with("a3-nopool params=12 "), "{line}");
    ok(dir.path(), &[&args[..], &["--out", "b.json"]].concat());
    let strip = |mut v: Value| {
        v["wall_time_s"] = Value::Null;
        v["config"]["out"] = Value::Null;
        v
    };
    let a = strip(json(&dir.path().join("a.json")));
    let b = strip(json(&dir.path().join("b.json")));
    assert_eq!(a, b);
    assert_eq!(a["losses"].as_array().unwrap().len(), 3);
    assert_eq!(a["config"]["seed"], 3);
    assert_eq!(a["config"]["dataset"]["source"], SMALL);
    assert_eq!(a["architecture"]["family"], "qcnn");
}

#[test]
fn config_file_overrides_flags_and_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "ansatz = \"a2-pool\"\nepochs = 1\nlr = 0.2\n").unwrap();
    let bad = qcnn(dir.path(), &["train", "--config", "run.toml", "--data", SMALL]);
    assert_eq!(bad.status.code(), Some(2), "unknown key `lr` must be rejected");

    std::fs::write(dir.path().join("run.toml"), "ansatz = \"a2-pool\"\nepochs = 1\nlearning_rate = 0.2\n").unwrap();
    ok(dir.path(), &["train", "--config", "run.toml", "--data", SMALL, "--epochs", "7", "--out", "r.json"]);
    let r = json(&dir.path().join("r.json"));
    assert_eq!(r["architecture"]["name"], "a2-pool");
    assert_eq!(r["config"]["epochs"], 1);
    assert_eq!(r["config"]["learning_rate"], 0.2);
    assert_eq!(r["losses"].as_array().unwrap().len(), 2);
}

#[test]
fn baseline_reports_share_the_quantum_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcnn(dir.path(), &["baseline", "--variant", "cnn9"]);
    assert_eq!(out.status.code(), Some(2));

    ok(dir.path(), &["synth", "--dim", "64", "--n", "20", "--out", "d.csv"]);
    ok(dir.path(), &["baseline", "--variant", "cnn1", "--data", "d.csv", "--epochs", "3", "--out", "b.json"]);
    ok(dir.path(), &["train", "--data", "d.csv", "--epochs", "1", "--out", "q.json"]);
    let b = json(&dir.path().join("b.json"));
    let q = json(&dir.path().join("q.json"));
    assert_eq!(b["architecture"]["param_count"], 12);
    assert_eq!(b["architecture"]["family"], "cnn");
    let keys = |v: &Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&b), keys(&q));
    assert_eq!(keys(&b["architecture"]), keys(&q["architecture"]));
    assert_eq!(b["config"]["dataset"]["checksum"], q["config"]["dataset"]["checksum"]);
}

#[test]
fn synth_writes_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--dim", "256", "--n", "200", "--sep", "8", "--seed", "0", "--out", "a.csv"]);
    ok(dir.path(), &["synth", "--dim", "256", "--n", "200", "--sep", "8", "--seed", "0", "--out", "b.csv"]);
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let rows = csv_rows(&dir.path().join("a.csv"));
    assert_eq!(rows.len(), 400);
    assert!(rows.iter().all(|r| r.len() == 257));
    let manifest = json(&dir.path().join("a.csv.manifest.json"));
    assert_eq!(manifest["manifest"]["n_records"], 400);
    assert_eq!(manifest["manifest"]["class_counts"], serde_json::json!([200, 200]));
    assert_eq!(manifest["config"]["sep"], 8.0);
}

#[test]
fn encode_dump_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["encode-dump", "--encoding", "amplitude", "--x", "3,4"]);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["n_qubits"], 1);
    let amps = v["amplitudes"].as_array().unwrap();
    assert!((amps[0][0].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!((amps[1][0].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert_eq!(amps[0][1], 0.0);
}

#[test]
fn encode_dump_from_file_applies_preprocessing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "label,f0,f1\n0,0,2\n1,4,2\n").unwrap();
    ok(dir.path(), &["encode-dump", "--encoding", "angle", "--data", "d.csv", "--record", "1", "--out", "e.json"]);
    let v = json(&dir.path().join("e.json"));
    let x = v["features"].as_array().unwrap();
    assert!((x[0].as_f64().unwrap() - (std::f64::consts::PI - 1e-6)).abs() < 1e-12);
    assert_eq!(x[1], 0.0);
    assert_eq!(v["amplitudes"].as_array().unwrap().len(), 4);
}

#[test]
fn entropy_conv2_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcnn(dir.path(), &["entropy", "--conv", "12"]);
    assert_eq!(out.status.code(), Some(2));

    ok(dir.path(), &["entropy", "--conv", "2", "-n", "1000", "--out-dir", "e"]);
    let v = json(&dir.path().join("e/entropy.json"));
    let s = &v["samples"][0];
    assert_eq!(s["id"], "conv2");
    assert!((s["summary"]["mean"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(v["config"]["samples"], 1000);
    let hist = csv_rows(&dir.path().join("e/conv2.hist.csv"));
    assert_eq!(hist.len(), 50);
    assert_eq!(&hist[49][2], "1000");
}

#[test]
fn entropy_layerwise_means_grow() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["entropy", "--ansatz", "a8-nopool", "--layerwise", "-n", "10000", "--out-dir", "e"]);
    let v = json(&dir.path().join("e/entropy.json"));
    let means: Vec<f64> = v["samples"].as_array().unwrap().iter().map(|s| s["summary"]["mean"].as_f64().unwrap()).collect();
    assert_eq!(means.len(), 3);
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
    assert!(dir.path().join("e/a8-nopool-layer3.hist.csv").exists());
}

#[test]
fn sweep_all_ansatzes_noiseless() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["sweep", "--data", SMALL, "--epochs", "0", "--out", "s.csv"]);
    let rows = csv_rows(&dir.path().join("s.csv"));
    assert_eq!(rows.len(), 18);
    assert!(rows.iter().all(|r| &r[1] == "none" && &r[3] == "1"));
    let summary = json(&dir.path().join("s.csv.json"));
    assert_eq!(summary["rows"].as_array().unwrap().len(), 18);
    assert_eq!(summary["config"]["epochs"], 0);
}

#[test]
fn sweep_aggregates_seeds_into_rows() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        dir.path(),
        &[
            "sweep", "--data", SMALL, "--ansatzes", "a1-pool,a3-nopool", "--noises", "bitflip,phaseflip,ampdamp,depol",
            "--ps", "0.01,0.05", "--repeats", "3", "--epochs", "1", "--batch-size", "8", "--out", "s.csv",
        ],
    );
    assert!(stdout.contains("total=48 computed=48 reused=0"), "{stdout}");
    let rows = csv_rows(&dir.path().join("s.csv"));
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| &r[3] == "3" && &r[4] == "0"));
    assert_eq!(std::fs::read_dir(dir.path().join("s.csv.cells")).unwrap().count(), 48);
}

#[test]
fn interrupted_sweep_resumes_remaining_cells() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--data", SMALL, "--ansatzes", "a2-pool,a4-nopool", "--noises", "none,depol", "--ps", "0.05",
        "--repeats", "2", "--epochs", "1", "--out", "s.csv",
    ];
    let first = qcnn(dir.path(), &[&args[..], &["--max-cells", "3"]].concat());
    assert_eq!(first.status.code(), Some(1));
    assert!(!dir.path().join("s.csv").exists());
    let cells = dir.path().join("s.csv.cells");
    let snapshot = |d: &Path| {
        let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    let done = snapshot(&cells);
    assert_eq!(done.len(), 3);

    let stdout = ok(dir.path(), &args);
    assert!(stdout.contains("total=8 computed=5 reused=3"), "{stdout}");
    let after = snapshot(&cells);
    assert_eq!(after.len(), 8);
    assert!(done.iter().all(|d| after.contains(d)), "finished cells must not be recomputed");
    assert_eq!(csv_rows(&dir.path().join("s.csv")).len(), 4);

    let again = ok(dir.path(), &args);
    assert!(again.contains("computed=0 reused=8"), "{again}");
}

#[test]
fn end_to_end_training_reaches_high_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "train", "--ansatz", "a3-nopool", "--encoding", "amplitude", "--qubits", "8", "--data",
            "synth:dim=256,n=200,sep=8,seed=0", "--lr", "0.05", "--epochs", "200", "--batch-size", "4", "--seed", "0",
            "--out", "r.json",
        ],
    );
    let r = json(&dir.path().join("r.json"));
    assert!(r["test_acc"].as_f64().unwrap() >= 0.95, "{}", r["test_acc"]);
}
