use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn games() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../games")
}

fn game(name: &str) -> String {
    games().join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn validate_accepts_bundled_games() {
    for g in [
        "example1.json",
        "example2.json",
        "bigmatch.json",
        "chain3.json",
        "two_exit.json",
    ] {
        let out = run(&["validate", "--game", &game(g)]);
        assert!(out.status.success(), "{g}");
        assert_eq!(json(&out)["valid"], true);
    }
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut doc: Value =
        serde_json::from_str(&std::fs::read_to_string(games().join("example2.json")).unwrap())
            .unwrap();
    doc["transitions"]["s0"]["a"]["s1"] = 0.5.into();
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = run(&["validate", "--game", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["valid"], false);
    assert!(!v["violations"].as_array().unwrap().is_empty());
}

#[test]
fn parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"players\": [").unwrap();
    let out = run(&["validate", "--game", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "eval",
        "--game",
        &game("example2.json"),
        "--s0",
        "nowhere",
        "--lambda",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_example2_closed_form() {
    let out = run(&[
        "eval",
        "--game",
        &game("example2.json"),
        "--s0",
        "s0",
        "--lambda",
        "0.5",
        "--profile",
        &game("example2_profile.json"),
    ]);
    assert!(out.status.success());
    let g = json(&out)["payoff"][0].as_f64().unwrap();
    assert!((g - 2.0).abs() < 1e-12);
}

#[test]
fn modified_eval_example2() {
    let out = run(&[
        "modified-eval",
        "--game",
        &game("example2.json"),
        "--spec",
        &game("example2_spec.json"),
    ]);
    assert!(out.status.success());
    let m = json(&out)["players"][0]["modified_payoff"]
        .as_f64()
        .unwrap();
    assert!((m - 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn best_response_accepts_player_number() {
    let args = |p: &'static str| {
        run(&[
            "best-response",
            "--game",
            &game("example1.json"),
            "--spec",
            &game("example1_spec.json"),
            "--player",
            p,
        ])
    };
    let by_id = json(&args("1"));
    assert_eq!(by_id["strategy"]["s1"]["B"], 1.0);
    let out = args("7");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_next_to_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("values.csv");
    let out = run(&[
        "values",
        "--game",
        &game("bigmatch.json"),
        "--player",
        "1",
        "--lambda",
        "0.9",
        "--format",
        "csv",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&out_path).unwrap();
    assert!(csv.starts_with("state,value\n"));
    let man: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("values.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(man["command"], "values");
    assert_eq!(man["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn equilibrium_trace_is_certified() {
    let out = run(&[
        "equilibrium",
        "--game",
        &game("bigmatch.json"),
        "--spec",
        &game("bigmatch_spec.json"),
        "--lambda-grid",
        "0.5,0.9",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(v.as_array().unwrap().iter().all(|r| r["certified"] == true));
}

#[test]
fn classify_two_exit_not_controllable() {
    let out = run(&["classify", "--game", &game("two_exit.json")]);
    assert!(out.status.success());
    assert_eq!(json(&out)["strongly_controllable"], false);
}

#[test]
fn uniform_eq_pass_and_fail_codes() {
    let out = run(&["uniform-eq", "--game", &game("chain3.json")]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = run(&["uniform-eq", "--game", &game("bigmatch.json")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn simulate_jsonl_and_segments() {
    let out = run(&[
        "simulate",
        "--game",
        &game("example2.json"),
        "--s0",
        "s0",
        "--horizon",
        "6",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    let dir = tempfile::tempdir().unwrap();
    let part = dir.path().join("part.json");
    std::fs::write(&part, r#"[["s0"], ["s1"]]"#).unwrap();
    let out = run(&[
        "simulate",
        "--game",
        &game("example2.json"),
        "--s0",
        "s0",
        "--horizon",
        "6",
        "--partition",
        part.to_str().unwrap(),
    ]);
    assert_eq!(json(&out)["switches"], 5);
}

#[test]
fn coin_names_a_candidate() {
    let out = run(&["coin", "--p", "0.5", "--samples", "20000"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["matches"], "p/(1-p)");
}

#[test]
fn reproduce_writes_all_artifacts() {
    for name in ["example1", "example2", "bigmatch"] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&["reproduce", name, "--out", dir.path().to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        for f in ["game.json", "table.csv", "checks.json", "manifest.json"] {
            assert!(dir.path().join(f).exists(), "{name}/{f}");
        }
        let checks: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("checks.json")).unwrap())
                .unwrap();
        assert_eq!(checks["pass"], true);
    }
}
