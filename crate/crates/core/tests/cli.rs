use std::path::Path;
use std::process::{Command, Output};

fn roar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roar"))
        .args(args)
        .env_remove("ROAR_JOBS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn verify_theory_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = roar(&["verify-theory", "--cases", "default", "--samples", "20000", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out);
    assert!(!report["cases"].as_array().unwrap().is_empty());
    let manifest = json(&dir.path().join("report.json.manifest.json"));
    assert_eq!(manifest["command"], "verify-theory");
    assert_eq!(manifest["artifacts"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = roar(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(roar(&[]).status.code(), Some(1));
    assert_eq!(roar(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_spec_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = roar(&["evaluate", "--spec", "missing.json", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    // nothing written on failure
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn generate_train_recourse_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = roar(&["generate-data", "--n", "200", "--alpha", "1", "--seed", "3", "--out", s(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d1 = data.join("d1.csv");
    assert!(std::fs::read_to_string(&d1).unwrap().starts_with("x0,x1,label\n"));

    let cfg = dir.path().join("train.json");
    std::fs::write(&cfg, r#"{"learning_rate": 0.05}"#).unwrap();
    let model_dir = dir.path().join("model");
    let o = roar(&["train", "--data", s(&d1), "--config", s(&cfg), "--seed", "1", "--out", s(&model_dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let model = model_dir.join("model.json");
    assert_eq!(json(&model)["kind"], "linear");

    let rec = dir.path().join("rec");
    let o = roar(&[
        "recourse", "--model", s(&model), "--data", s(&d1), "--method", "roar", "--lambda", "0.5", "--delta-max", "0.2", "--limit", "5", "--out",
        s(&rec),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(rec.join("recourses.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 5);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["counterfactual"].is_array() || v["error"].is_string());
    }
    let manifest = json(&rec.join("manifest.json"));
    assert_eq!(manifest["config"]["recourse"]["lambda"], 0.5);

    // roar needs a linear model
    let mlp_dir = dir.path().join("mlp");
    let o = roar(&["train", "--data", s(&d1), "--model", "mlp", "--layers", "4", "--seed", "1", "--out", s(&mlp_dir)]);
    assert_eq!(o.status.code(), Some(0));
    let o = roar(&["recourse", "--model", s(&mlp_dir.join("model.json")), "--data", s(&d1), "--method", "roar", "--out", s(&rec)]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_spec(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    std::fs::write(
        &spec,
        r#"{
            "data": {"synthetic": {"n": 200}},
            "model": "lr",
            "methods": ["cfe", "roar"],
            "lambda": 0.5,
            "folds": 2,
            "seeds": [7],
            "training": {"learning_rate": 0.05},
            "max_instances": 5
        }"#,
    )
    .unwrap();
    spec
}

#[test]
fn evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = roar(&["--jobs", "2", "evaluate", "--spec", s(&spec), "--delta-max", "0.3", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["config"]["delta_max"], 0.3);
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
}

#[test]
fn jobs_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let o = Command::new(env!("CARGO_BIN_EXE_roar"))
        .args(["evaluate", "--spec", s(&spec), "--out", s(&dir.path().join("o"))])
        .env("ROAR_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let out = dir.path().join("sweep");
    let o = roar(&["sweep", "--spec", s(&spec), "--alphas", "0,1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("plotdata.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,alpha,beta,m2_validity_mean,m2_validity_se");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert_eq!(json(&out.join("sweep.json")).as_array().unwrap().len(), 2);
}

#[test]
fn numerical_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(roar(&["generate-data", "--n", "100", "--seed", "1", "--out", s(&data)]).status.code(), Some(0));
    let cfg = dir.path().join("t.json");
    std::fs::write(&cfg, r#"{"learning_rate": 1e308}"#).unwrap();
    let out = dir.path().join("m");
    let o = roar(&["train", "--data", s(&data.join("d1.csv")), "--config", s(&cfg), "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}
