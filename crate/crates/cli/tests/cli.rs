use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn covflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covflow"))
        .args(args)
        .env_remove("COVFLOW_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn load(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(schema: &str, doc: &Value) {
    let schema = load(&schema_dir().join(schema));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn run_ok(args: &[&str]) -> Output {
    let out = covflow(args);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    out
}

fn check_manifest(dir: &Path) -> Value {
    let m = load(&dir.join("manifest.json"));
    assert_valid("manifest.schema.json", &m);
    for f in m["outputs"].as_array().unwrap() {
        assert!(dir.join(f.as_str().unwrap()).exists(), "{f}");
    }
    m
}

#[test]
fn decompose_classifies_registry_members() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("tanh");
    let out = run_ok(&["decompose", "--activation", "tanh", "--out", dir.to_str().unwrap()]);
    let printed: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(printed["classification"], "ZeroMeanNonlinear");
    let doc = load(&dir.join("decomposition.json"));
    assert_valid("decomposition.schema.json", &doc);
    assert_eq!(doc["report"], printed);
    check_manifest(&dir);

    let out = run_ok(&["decompose", "--activation", "relu", "--out", tmp.path().join("relu").to_str().unwrap()]);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let a0 = r["series"]["coefficients"][0].as_f64().unwrap();
    assert!((a0 - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);

    let out = run_ok(&["decompose", "--activation", "identity", "--out", tmp.path().join("id").to_str().unwrap()]);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let coefficients: Vec<f64> = r["series"]["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((coefficients[1] - 1.0).abs() < 1e-12);
    for (n, c) in coefficients.iter().enumerate().filter(|(n, _)| *n != 1) {
        assert!(c.abs() < 1e-12, "a_{n} = {c}");
    }
    assert_eq!(r["classification"], "Linear");
}

#[test]
fn decompose_rejects_unknown_activation() {
    let out = covflow(&["decompose", "--activation", "swish"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("swish"));
}

#[test]
fn decompose_reads_activation_file() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("act.json");
    fs::write(&spec, r#"{"id": "steep", "kind": "tanh", "scale": 2.0}"#).unwrap();
    let out = run_ok(&[
        "decompose",
        "--activation-file",
        spec.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(r["activation"], "steep");
    assert_eq!(r["classification"], "ZeroMeanNonlinear");
}

fn flow_report(dir: &Path, activation: &str, k0: &str) -> Value {
    run_ok(&["flow", "--activation", activation, "--k0", k0, "--depth", "100", "--out", dir.to_str().unwrap()]);
    let doc = load(&dir.join("flow_report.json"));
    assert_valid("flow_report.schema.json", &doc);
    check_manifest(dir);
    doc["report"].clone()
}

fn trajectory(dir: &Path) -> Vec<(usize, f64)> {
    let text = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("layer,k"));
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

#[test]
fn flow_classifications() {
    let tmp = tempfile::tempdir().unwrap();
    let r = flow_report(&tmp.path().join("tanh"), "tanh", "0.5");
    assert_eq!(r["flow"]["classification"], "DecaysToZero");
    let r = flow_report(&tmp.path().join("relu"), "relu", "0.5");
    assert_eq!(r["flow"]["classification"], "DegenerateToOne");

    let dir = tmp.path().join("shifted");
    let r = flow_report(&dir, "relu-shifted", "-0.5");
    assert_eq!(r["flow"]["classification"], "DecaysToZero");
    let t = trajectory(&dir);
    assert_eq!(t[0], (0, -0.5));
    assert_eq!(t.len(), 101);
    for w in t.windows(2) {
        assert!(w[1].1.abs() < w[0].1.abs(), "{w:?}");
    }
    assert!(t.last().unwrap().1.abs() < 1e-10);
}

#[test]
fn flow_rejects_unit_initial_covariance() {
    for k0 in ["1.0", "-1", "1.5"] {
        let out = covflow(&["flow", "--activation", "tanh", "--k0", k0]);
        assert_eq!(code(&out), 1, "{k0}");
        assert!(stderr(&out).contains("scalar multiples"), "{}", stderr(&out));
    }
}

#[test]
fn figure1_panels() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_ok(&["figure1", "--grid", "5", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(stdout(&out).lines().count(), 3);
    check_manifest(tmp.path());
    let read = |name: &str| -> Vec<Vec<f64>> {
        let text = fs::read_to_string(tmp.path().join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k_in,k_out,diagonal"));
        lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
    };
    for name in ["figure1_relu.csv", "figure1_tanh4x.csv", "figure1_relu_shifted.csv"] {
        let rows = read(name);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4], vec![1.0, 1.0, 1.0]);
        for r in &rows {
            assert_eq!(r[0], r[2]);
        }
    }
    let tanh = read("figure1_tanh4x.csv");
    assert!(tanh[2][0] == 0.0 && tanh[2][1].abs() < 1e-14);
    let relu = read("figure1_relu.csv");
    assert!((relu[2][1] - 1.0 / std::f64::consts::PI).abs() < 1e-12);
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_identity_depth_one_is_within_four_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"network": {"n0": 3, "width": 64, "depth": 1, "activation": "identity"},
            "gram": [[1.0, 0.5, -0.2], [0.5, 1.0, 0.3], [-0.2, 0.3, 1.0]], "samples": 400}"#,
    );
    let dir = tmp.path().join("out");
    run_ok(&["simulate", "--config", config.to_str().unwrap(), "--seed", "7", "--out", dir.to_str().unwrap()]);
    let doc = load(&dir.join("simulation.json"));
    assert_valid("simulation.schema.json", &doc);
    for e in doc["report"]["comparison"]["entries"].as_array().unwrap() {
        assert!(e["z_score"].as_f64().unwrap().abs() <= 4.0, "{e}");
    }
    let m = check_manifest(&dir);
    assert_eq!(m["seed"], 7);
    let csv = fs::read_to_string(dir.join("covariance.csv")).unwrap();
    assert!(csv.starts_with("layer,alpha,beta,kind,empirical,stderr,theory,band,z_score,within_band\n"));
}

#[test]
fn simulate_config_files_match_schema() {
    let schema = load(&schema_dir().join("simulate_config.schema.json"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let good: Value = serde_json::from_str(
        r#"{"network": {"n0": 2, "width": 8, "depth": 2, "activation": "tanh"}, "dataset": {"inputs": [[1.0, 1.0]]}}"#,
    )
    .unwrap();
    assert!(validator.is_valid(&good));
    let both: Value = serde_json::from_str(
        r#"{"network": {"n0": 2, "width": 8, "depth": 2, "activation": "tanh"},
            "dataset": {"inputs": [[1.0, 1.0]]}, "gram": [[1.0]]}"#,
    )
    .unwrap();
    assert!(!validator.is_valid(&both));
}

#[test]
fn simulate_reports_unnormalized_row() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"network": {"n0": 2, "width": 8, "depth": 2, "activation": "tanh"},
            "dataset": {"inputs": [[1.0, 1.0], [1.0, 0.5]]}}"#,
    );
    let out = covflow(&["simulate", "--config", config.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("row 1") && err.contains("config.json"), "{err}");
}

#[test]
fn simulate_requires_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "{}");
    let out = covflow(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn simulate_missing_file_names_path() {
    let out = covflow(&["simulate", "--config", "/nonexistent/sim.json", "--seed", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("/nonexistent/sim.json"));
}

#[test]
fn simulate_flags_gross_disagreement() {
    // At width 2 the finite-width corrections dwarf the standard errors.
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"network": {"n0": 2, "width": 2, "depth": 8, "activation": "tanh"},
            "dataset": {"inputs": [[1.0, 1.0], [1.4, 0.2]]}, "samples": 20000}"#,
    );
    let out = covflow(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn worker_count_does_not_change_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"network": {"n0": 4, "width": 48, "depth": 4, "activation": "gelu"},
            "gram": [[1.0, 0.8, 0.1], [0.8, 1.0, -0.4], [0.1, -0.4, 1.0]], "samples": 150}"#,
    );
    let mut dirs = Vec::new();
    for workers in ["1", "3"] {
        let dir = tmp.path().join(format!("w{workers}"));
        run_ok(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "99",
            "--workers",
            workers,
            "--out",
            dir.to_str().unwrap(),
        ]);
        dirs.push(dir);
    }
    for f in ["simulation.json", "covariance.csv", "manifest.json"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn replay_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    run_ok(&["conjecture", "--n", "6", "--m", "16", "--trials", "300", "--seed", "5", "--out", a.to_str().unwrap()]);
    let b = tmp.path().join("b");
    run_ok(&["replay", a.join("manifest.json").to_str().unwrap(), "--out", b.to_str().unwrap()]);
    for f in ["rarity.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn conjecture_synthetic_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_ok(&[
        "conjecture",
        "--n",
        "8",
        "--m",
        "256",
        "--trials",
        "2000",
        "--mode",
        "synthetic",
        "--seed",
        "11",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let line = stdout(&out);
    assert!(line.contains("prediction 1.000000"), "{line}");
    let doc = load(&tmp.path().join("rarity.json"));
    assert_valid("rarity.schema.json", &doc);
    let r = &doc["report"];
    assert_eq!(r["independence_prediction"], 1.0);
    let ci = r["confidence_interval"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() <= 1.0 && 1.0 <= ci[1].as_f64().unwrap(), "{ci:?}");
    check_manifest(tmp.path());
}

#[test]
fn conjecture_network_mode_reports_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_ok(&["conjecture", "--n", "8", "--m", "64", "--trials", "500", "--seed", "2", "--out", tmp.path().to_str().unwrap()]);
    assert!(stdout(&out).contains("95% CI"));
    let doc = load(&tmp.path().join("rarity.json"));
    assert_valid("rarity.schema.json", &doc);
    assert_eq!(doc["report"]["depth"], 3);
    assert_eq!(doc["report"]["mode"], "network");
}

#[test]
fn underpowered_conjecture_run_exits_two() {
    let out = covflow(&["conjecture", "--n", "14", "--m", "2", "--trials", "100", "--mode", "synthetic", "--seed", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("increase trials"));
}

#[test]
fn unsatisfiable_dataset_rejected() {
    let out = covflow(&["conjecture", "--n", "2", "--m", "3", "--seed", "1"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn four_point_of_gaussian_layer_is_inconclusive() {
    let out = covflow(&[
        "four-point",
        "--activation",
        "identity",
        "--width",
        "16",
        "--depth",
        "1",
        "--samples",
        "100",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn four_point_report_matches_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_ok(&[
        "four-point",
        "--width",
        "16",
        "--depth",
        "3",
        "--samples",
        "400",
        "--seed",
        "4",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(stdout(&out).contains("ratio"));
    let doc = load(&tmp.path().join("four_point.json"));
    assert_valid("four_point.schema.json", &doc);
    assert_eq!(doc["report"]["wide"]["width"], 32);
}
