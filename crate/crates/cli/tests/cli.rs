use std::path::PathBuf;
use std::process::{Command, Output};

fn model(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "models", &format!("{name}.json")]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multistate")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn term_reserve_at_zero() {
    let o = run(&["reserve", "--model", &model("term"), "--state", "0", "--time", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let v: f64 = text.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    let closed = 0.1 / 0.15 * (1.0 - (-1.5f64).exp());
    assert!((v - closed).abs() <= 1e-6, "{text}");
    assert!(text.starts_with("state,time,value\n"));
}

#[test]
fn market_basis_is_pessimistic() {
    let o = run(&["compare", "--a", &model("tech"), "--b", &model("market")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report.to_string().contains("pessimistic"), "{report}");
}

#[test]
fn simulation_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("p{k}.csv"))).collect();
    for (f, threads) in files.iter().zip(["1", "2"]) {
        let o = run(&[
            "simulate", "--model", &model("disability"), "--n", "200", "--seed", "7",
            "--threads", threads, "--out", f.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = std::fs::read(&files[0]).unwrap();
    assert!(a.starts_with(b"path_id,time,from,to\n"));
    assert_eq!(a, std::fs::read(&files[1]).unwrap());
}

#[test]
fn simulation_needs_a_seed() {
    let o = run(&["simulate", "--model", &model("term"), "--n", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn unnormalized_alpha_is_rejected() {
    let o = run(&["transform", "--model", &model("term"), "--name", "alpha", "--alpha", "0.9,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn schema_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.json");
    std::fs::write(&f, r#"{"states": [0, 1], "alpha": [1, 0], "horizon": "ten"}"#).unwrap();
    let o = run(&["reserve", "--model", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("horizon"), "{}", stderr(&o));
}

#[test]
fn invalid_model_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("alpha.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(model("term")).unwrap()).unwrap();
    doc["alpha"] = serde_json::json!([0.9, 0.0]);
    std::fs::write(&f, doc.to_string()).unwrap();
    let o = run(&["validate", "--model", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!report["violations"].as_array().unwrap().is_empty(), "{report}");
    let ok = run(&["validate", "--model", &model("disability")]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn negative_rate_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("neg.json");
    let text = std::fs::read_to_string(model("term")).unwrap().replace("0.1", "-0.1");
    std::fs::write(&f, text).unwrap();
    let o = run(&["validate", "--model", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("negative density"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_a_user_error() {
    let o = run(&["reserve", "--model", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reserve_resolves_reserve_dependent_payments() {
    let o = run(&["reserve", "--model", &model("surrender"), "--state", "0", "--time", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
