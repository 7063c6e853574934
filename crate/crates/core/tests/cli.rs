use std::path::Path;
use std::process::{Command, Output};

use alloc_improve::rng::derive_stream;
use alloc_improve::simulation::{Dgp, SimpleDgpParams};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alloc-improve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_trial(path: &Path, n: usize) {
    let data = Dgp::Simple(SimpleDgpParams::standard())
        .generate(n, &mut derive_stream(5, &[0]))
        .unwrap();
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["x", "arm", "outcome"]).unwrap();
    for i in 0..data.n() {
        w.write_record([
            data.row(i)[0].to_string(),
            data.treatment()[i].to_string(),
            data.response()[i].to_string(),
        ])
        .unwrap();
    }
    w.flush().unwrap();
}

fn evaluate_args<'a>(input: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "evaluate", "--input", input, "--treatment-col", "arm", "--response-col", "outcome",
        "--main", "x", "--interactions", "x",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn missing_response_column_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trial.csv");
    write_trial(&input, 40);
    let out = bin(&[
        "evaluate", "--input", input.to_str().unwrap(), "--treatment-col", "arm",
        "--response-col", "hrsd", "--main", "x",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hrsd"));
}

#[test]
fn unreadable_input_exits_two() {
    let out = bin(&evaluate_args("/nonexistent/trial.csv", &[]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_replicate_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trial.csv");
    write_trial(&input, 60);
    let out = bin(&evaluate_args(input.to_str().unwrap(), &["--b", "1", "--format", "json"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["B"], 1);
    let ci = &json["i_random"]["ci"];
    assert_eq!(ci[0], ci[1]);
}

#[test]
fn too_few_rows_for_model_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trial.csv");
    std::fs::write(&input, "x,arm,outcome\n1,0,1\n2,0,2\n3,1,2\n4,1,5\n").unwrap();
    // four rows cannot identify an intercept, x, arm and x:arm
    let out = bin(&evaluate_args(input.to_str().unwrap(), &["--b", "5", "--k-folds", "2"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn json_output_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trial.csv");
    write_trial(&input, 120);
    let run = |w: &str| {
        let out = bin(&evaluate_args(
            input.to_str().unwrap(),
            &["--b", "150", "--seed", "9", "--format", "json", "--workers", w],
        ));
        assert_eq!(out.status.code(), Some(0));
        out.stdout
    };
    let one = run("1");
    assert_eq!(one, run("2"));
    assert_eq!(one, run("8"));
}

#[test]
fn direction_flag_overrides_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trial.csv");
    let spec = dir.path().join("spec.json");
    write_trial(&input, 80);
    std::fs::write(&spec, r#"{"main": ["x"], "interactions": ["x"], "direction": "higher"}"#).unwrap();
    let out = bin(&[
        "evaluate", "--input", input.to_str().unwrap(), "--treatment-col", "arm",
        "--response-col", "outcome", "--model-spec", spec.to_str().unwrap(), "--direction",
        "lower", "--b", "20", "--format", "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["direction"], "lower");
}

#[test]
fn emitted_samples_match_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trial.csv");
    let samples = dir.path().join("samples.csv");
    write_trial(&input, 100);
    let out = bin(&evaluate_args(
        input.to_str().unwrap(),
        &["--b", "25", "--format", "json", "--emit-samples", samples.to_str().unwrap()],
    ));
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mut reader = csv::Reader::from_path(&samples).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["n", "kind", "i_random", "i_best"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 26);
    assert!(rows[..25].iter().all(|r| &r[0] == "100" && &r[1] == "sample"));
    let last = &rows[25];
    assert_eq!(&last[1], "observed");
    let est: f64 = last[2].parse().unwrap();
    assert_eq!(est, json["i_random"]["est"].as_f64().unwrap());
}

#[test]
fn simulate_text_layout() {
    let out = bin(&[
        "simulate", "--scenario", "simple", "--n", "200", "--b", "50", "--oracle-draws", "10000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("n = 200\n"));
    assert!(text.contains("95% CI for I_random = ["));
    assert!(text.contains("95% CI covers mu_I0: I_random = "));
}

#[test]
fn invalid_scenario_parameters_exit_two() {
    let out = bin(&["simulate", "--scenario", "simple", "--sigma-x", "0", "--b", "5"]);
    assert_eq!(out.status.code(), Some(2));
}
