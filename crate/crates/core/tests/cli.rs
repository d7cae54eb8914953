use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hietan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hietan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Canonical six-term hierarchy with the two sample genes.
fn two_genes(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("fig5.csv");
    let dag = dir.join("fig5.tsv");
    fs::write(&data, "A,B,C,D,E,F,class\n1,1,1,1,1,1,1\n0,1,0,0,0,1,0\n").unwrap();
    fs::write(&dag, "F\tB\nF\tC\nE\tC\nE\tA\nC\tD\nA\tD\n").unwrap();
    (data, dag)
}

fn synth(dir: &Path, features: usize, instances: usize) -> (PathBuf, PathBuf) {
    let data = dir.join("synth.csv");
    let dag = dir.join("synth.tsv");
    let out = hietan(&[
        "synth",
        "--features",
        &features.to_string(),
        "--instances",
        &instances.to_string(),
        "--seed",
        "5",
        "--data-out",
        s(&data),
        "--dag-out",
        s(&dag),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (data, dag)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (data, dag) = two_genes(dir.path());
    assert_eq!(hietan(&["validate", "--data", s(&data), "--dag", s(&dag)]).status.code(), Some(0));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "A,B,C,D,E,F,class\n1,1,0,1,1,1,1\n").unwrap();
    let out = hietan(&["validate", "--data", s(&bad), "--dag", s(&dag)]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "{stdout}");
    assert!(stdout.contains("D = 1 but ancestor C = 0"));

    let missing = dir.path().join("missing.csv");
    assert_eq!(hietan(&["validate", "--data", s(&missing), "--dag", s(&dag)]).status.code(), Some(1));
}

#[test]
fn validate_repair_writes_consistent_copy() {
    let dir = TempDir::new().unwrap();
    let (_, dag) = two_genes(dir.path());
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "A,B,C,D,E,F,class\n0,0,0,1,0,0,1\n").unwrap();
    let fixed = dir.path().join("fixed.csv");
    let out = hietan(&["validate", "--data", s(&bad), "--dag", s(&dag), "--repair", "--output", s(&fixed)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&fixed).unwrap(), "A,B,C,D,E,F,class\n1,0,1,1,1,1,1\n");
    assert_eq!(hietan(&["validate", "--data", s(&fixed), "--dag", s(&dag)]).status.code(), Some(0));
    // --repair without --output is a usage error.
    assert_eq!(hietan(&["validate", "--data", s(&bad), "--dag", s(&dag), "--repair"]).status.code(), Some(1));
}

#[test]
fn cv_all_methods_writes_three_blocks() {
    let dir = TempDir::new().unwrap();
    let (data, dag) = synth(dir.path(), 15, 80);
    let results = dir.path().join("results.json");
    let out = hietan(&["cv", "--data", s(&data), "--dag", s(&dag), "--folds", "4", "--output", s(&results)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&results);
    let methods: Vec<&str> = doc["methods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["tan", "hie-tan", "hie-tan-lite"]);
    assert_eq!(doc["config"]["folds"], 4);
    assert_eq!(doc["n_instances"], 80);
    for m in doc["methods"].as_array().unwrap() {
        let total: u64 = m["folds"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| ["tp", "fp", "tn", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum::<u64>())
            .sum();
        assert_eq!(total, 80);
    }
    assert!(doc["usage"]["features"].is_array());
}

#[test]
fn cv_rejects_single_fold() {
    let dir = TempDir::new().unwrap();
    let (data, dag) = two_genes(dir.path());
    let out = hietan(&["cv", "--data", s(&data), "--dag", s(&dag), "--folds", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cv_output_independent_of_jobs() {
    let dir = TempDir::new().unwrap();
    let (data, dag) = synth(dir.path(), 12, 60);
    let results = dir.path().join("r.json");
    let run = |jobs: &str| {
        let out = hietan(&[
            "--jobs",
            jobs,
            "cv",
            "--data",
            s(&data),
            "--dag",
            s(&dag),
            "--folds",
            "3",
            "--output",
            s(&results),
        ]);
        assert!(out.status.success());
        let mut doc = read_json(&results);
        doc.as_object_mut().unwrap().remove("timestamp");
        doc
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn features_top_and_wrong_method() {
    let dir = TempDir::new().unwrap();
    let (data, dag) = synth(dir.path(), 15, 60);
    let report = dir.path().join("features.json");
    let out = hietan(&[
        "features", "--data", s(&data), "--dag", s(&dag), "--folds", "3", "--top", "3", "--output", s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&report);
    assert_eq!(doc["n_instances"], 60);
    assert_eq!(doc["freq_of_selection"].as_array().unwrap().len(), 3);
    assert_eq!(doc["freq_in_edges"].as_array().unwrap().len(), 3);

    let out = hietan(&["features", "--data", s(&data), "--dag", s(&dag), "--method", "tan"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hie-tan-lite"));
}

#[test]
fn train_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let (data, dag) = synth(dir.path(), 10, 50);
    let model = dir.path().join("model.json");
    let trace = dir.path().join("trace.jsonl");
    let out = hietan(&[
        "train", "--data", s(&data), "--dag", s(&dag), "--method", "hie-tan", "--output", s(&model), "--trace", s(&trace),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for line in fs::read_to_string(&trace).unwrap().lines() {
        let event: Value = serde_json::from_str(line).unwrap();
        assert!(event["decision"].is_string());
    }

    let preds = dir.path().join("preds.csv");
    let out = hietan(&["predict", "--input", s(&data), "--model", s(&model), "--output", s(&preds)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&preds).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert!(text.starts_with("instance,label,log_posterior_0,log_posterior_1\n"));

    let lazy = hietan(&["predict", "--input", s(&data), "--data", s(&data), "--dag", s(&dag)]);
    assert!(lazy.status.success());
    assert_eq!(String::from_utf8(lazy.stdout).unwrap().lines().count(), 51);
}

#[test]
fn train_rejects_lazy_method() {
    let dir = TempDir::new().unwrap();
    let (data, dag) = two_genes(dir.path());
    let model = dir.path().join("m.json");
    let out = hietan(&["train", "--data", s(&data), "--dag", s(&dag), "--method", "hie-tan-lite", "--output", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!model.exists());
}

#[test]
fn unrepaired_violations_block_cv() {
    let dir = TempDir::new().unwrap();
    let (_, dag) = two_genes(dir.path());
    let bad = dir.path().join("bad.csv");
    let rows: String = (0..10).map(|i| format!("0,0,0,1,0,0,{}\n", i % 2)).collect();
    fs::write(&bad, format!("A,B,C,D,E,F,class\n{rows}")).unwrap();
    let results = dir.path().join("r.json");
    let base = ["cv", "--data", s(&bad), "--dag", s(&dag), "--folds", "2", "--output", s(&results)];
    assert_eq!(hietan(&base).status.code(), Some(1));
    let mut repaired = base.to_vec();
    repaired.push("--repair");
    assert_eq!(hietan(&repaired).status.code(), Some(0));
}
