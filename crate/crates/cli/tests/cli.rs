use std::path::Path;
use std::process::{Command, Output};

use qsurrogate::pipeline::config::RunConfig;
use qsurrogate::pipeline::train::TrainingGrids;
use qsurrogate::surrogates::dnn::DnnParams;
use qsurrogate::surrogates::forest::ForestParams;
use qsurrogate::surrogates::svr::SvrParams;
use qsurrogate::surrogates::tree::TreeParams;

fn qs(dir: &Path, args: &[&str]) -> Output {
    let log = dir.join("cli.log");
    Command::new(env!("CARGO_BIN_EXE_qsurrogate"))
        .args(args)
        .arg("--log-file")
        .arg(&log)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = qs(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tiny_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::desk(out.to_path_buf(), 5);
    cfg.suite.synthetic.as_mut().unwrap().n_records = 4;
    cfg.suite.duration = 20.0;
    cfg.generation.n_samples = 60;
    let mut dnn = DnnParams::new(2, 8);
    dnn.max_epochs = 10;
    cfg.training = TrainingGrids {
        dt: vec![TreeParams { max_depth: Some(3) }],
        rf: vec![ForestParams {
            n_trees: 3,
            max_depth: None,
            max_features: None,
            bootstrap: true,
        }],
        svr: vec![SvrParams::new(1.0, 0.1)],
        dnn: vec![dnn],
        k_folds: 2,
    };
    cfg.validation.n_generated = 4;
    cfg
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = qs(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dataset"));
    assert_eq!(qs(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qs(dir.path(), &["no-such-verb"]).status.code(), Some(1));
    assert_eq!(qs(dir.path(), &["basis", "build"]).status.code(), Some(1));
}

#[test]
fn missing_config_exits_two_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = qs(dir.path(), &["--config", "nowhere.json", "run"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nowhere.json"), "{err}");
    assert!(err.contains("cli.log"), "{err}");
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"seed": 1, "colour": "blue"}"#).unwrap();
    assert_eq!(qs(dir.path(), &["--config", "bad.json", "run"]).status.code(), Some(2));

    let mut cfg = tiny_config(&dir.path().join("out"));
    cfg.split.test_fraction = 1.5;
    std::fs::write(dir.path().join("range.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(qs(dir.path(), &["--config", "range.json", "run", "--manifest-only"]).status.code(), Some(2));
}

#[test]
fn failures_of_the_work_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = qs(dir.path(), &["basis", "build", "--suite", "absent.qsuite", "--variance", "0.99", "--out", "b.qbasis"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn manifest_only_prints_hashes_without_writing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&dir.path().join("out"));
    std::fs::write(dir.path().join("cfg.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    let text = ok(dir.path(), &["--config", "cfg.json", "run", "--manifest-only"]);
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap(), cfg.identity_hash());
    assert!(!dir.path().join("out").join("dataset.qdata").exists());
}

#[test]
fn verbs_chain_from_records_to_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "4", "--out-dir", "recs"]);
    ok(d, &["ingest", "--dir", "recs", "--duration", "20", "--out", "suite.qsuite"]);
    assert!(d.join("suite.qsuite.json").exists());
    ok(d, &["basis", "build", "--suite", "suite.qsuite", "--variance", "0.99", "--out", "b.qbasis"]);
    ok(d, &["basis", "project", "--basis", "b.qbasis", "--record", "recs/SYN00.at2", "--out", "w.json"]);
    ok(d, &["basis", "reconstruct", "--basis", "b.qbasis", "--weights", "w.json", "--out", "back.csv"]);
    ok(d, &["--seed", "3", "basis", "sample", "--basis", "b.qbasis", "--n", "2", "--out", "gen.qsuite"]);

    let im = {
        ok(d, &["im", "--suite", "suite.qsuite", "--generated", "gen.qsuite", "--out", "im.csv"]);
        std::fs::read_to_string(d.join("im.csv")).unwrap()
    };
    assert_eq!(im.lines().next().unwrap(), "source,id,pga,arias,lambda1");
    assert_eq!(im.lines().count(), 1 + 4 + 2);

    std::fs::write(d.join("model.json"), r#"{"stories": [{"E": 40.0, "Fy": 0.28, "xi": 0.05, "b": 0.02}]}"#).unwrap();
    let edp = ok(d, &["simulate", "--model", "model.json", "--record", "back.csv", "--edp-only"]);
    let edp: serde_json::Value = serde_json::from_str(edp.trim()).unwrap();
    assert!(edp.is_object());
    ok(d, &["simulate", "--model", "model.json", "--record", "recs/SYN01.at2", "--out", "hist.csv"]);
    assert!(std::fs::read_to_string(d.join("hist.csv")).unwrap().lines().count() > 1000);

    let cfg = tiny_config(&d.join("unused"));
    std::fs::write(d.join("cfg.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    ok(d, &["--seed", "7", "dataset", "generate", "--basis", "b.qbasis", "--n", "40", "--test-fraction", "0.2", "--out", "ds.qdata"]);
    let board = ok(d, &["--config", "cfg.json", "train", "--data", "ds.qdata", "--out-dir", "models"]);
    assert_eq!(board.lines().count(), 5);
    assert_eq!(ok(d, &["leaderboard", "--dir", "models"]).lines().count(), 5);
    ok(d, &[
        "validate", "generated", "--model", "models/model_dnn.qmodel", "--basis", "b.qbasis", "--n", "4", "--out-dir", "val",
    ]);
    assert!(d.join("val").read_dir().unwrap().count() >= 2);
}

#[test]
fn run_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(&d.join("a"));
    std::fs::write(d.join("cfg.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    ok(d, &["--config", "cfg.json", "--workers", "1", "run"]);
    ok(d, &["--config", "cfg.json", "--workers", "2", "run", "--out-dir", "b"]);
    let outputs = |sub: &str| {
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.join(sub).join("manifest.json")).unwrap()).unwrap();
        m["outputs"].clone()
    };
    assert_eq!(outputs("a"), outputs("b"));
}

#[test]
fn minimal_config_takes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"seed": 7, "output_dir": "out", "suite": {"synthetic": {"seed": 1, "n_records": 20}}}"#;
    std::fs::write(dir.path().join("run.json"), text).unwrap();
    let m: serde_json::Value = serde_json::from_str(&ok(dir.path(), &["--config", "run.json", "run", "--manifest-only"])).unwrap();
    assert_eq!(m["config"]["generation"]["n_samples"], 20_000);
    assert_eq!(m["config"]["split"]["test_fraction"], 0.1);
}
