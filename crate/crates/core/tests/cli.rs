use std::path::{Path, PathBuf};
use std::process::Command;

use bonus_plans::{BonusPlan, Market};
use serde_json::Value;

const TWO_BONDS: &str = r#"{
  "actions": ["X1", "X2"],
  "atoms": [
    {"p": "3/5", "outcomes": ["1.05", "1.051"]},
    {"p": "0.4", "outcomes": ["1.05", "1.0"]}
  ]
}"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn bin(args: &[&str]) -> Run {
    let output = Command::new(env!("CARGO_BIN_EXE_bonus-plans")).args(args).output().unwrap();
    Run {
        code: output.status.code().unwrap(),
        stdout: String::from_utf8(output.stdout).unwrap(),
        stderr: String::from_utf8(output.stderr).unwrap(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn replicate_example_table() {
    let run = bin(&["replicate-example", "--lambda", "1/2"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    for needle in ["0.775", "0.825", "0.7153", "0.7653", "unique equilibrium (X2,X2) by strict dominance"] {
        assert!(run.stdout.contains(needle), "{needle}");
    }
    let approx = bin(&["--decimal", "replicate-example"]);
    assert!(approx.stdout.contains("~0.775000"));
}

#[test]
fn probe_universal_on_winner_take_all() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "wta2.json", r#"{"players": 2, "kind": "wta"}"#);
    let run = bin(&["probe-universal", "--plan", s(&plan), "--grid", "0:1:1", "--players", "2", "--json"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let doc = run.json();
    assert_eq!(doc["construction"], "case_b");
    assert_eq!(doc["p"], "5/6");
    assert_eq!(doc["z"], "6");
    assert_eq!(doc["gain"], "1/3");

    // the emitted market feeds straight back into check-eq
    let market = write(dir.path(), "ce.json", &doc["market"].to_string());
    let profile = write(dir.path(), "profile.json", "[[1, 0], [1, 0]]");
    let check = bin(&["--json", "check-eq", "--market", s(&market), "--plan", s(&plan), "--profile", s(&profile)]);
    assert_eq!(check.code, 0, "{}", check.stderr);
    let report = check.json();
    assert_eq!(report["verdict"], "not_equilibrium");
    assert_eq!(report["players"][0]["gain"], "1/3");

    let text = bin(&["probe-universal", "--plan", s(&plan), "--grid", "0:1:1"]);
    assert!(text.stdout.contains("gains 1/3 by switching to X2"), "{}", text.stdout);
}

#[test]
fn probe_universal_constant_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "c3.json", r#"{"players": 3, "kind": "constant"}"#);
    let run = bin(&["--json", "probe-universal", "--plan", s(&plan), "--grid", "0:3:1"]);
    assert_eq!(run.code, 0);
    assert_eq!(run.json()["verdict"], "constant_on_grid");
    let wrong = bin(&["--json", "probe-universal", "--plan", s(&plan), "--grid", "0:3:1", "--players", "2"]);
    assert_eq!(wrong.code, 1);
    assert_eq!(wrong.json()["error"]["kind"], "ArityMismatch");
    let grid = bin(&["--json", "probe-universal", "--plan", s(&plan), "--grid", "0:3"]);
    assert_eq!(grid.code, 1);
    assert_eq!(grid.json()["error"]["kind"], "InvalidGrid");
}

#[test]
fn malformed_profile_weights() {
    let dir = tempfile::tempdir().unwrap();
    let market = write(dir.path(), "m.json", TWO_BONDS);
    let plan = write(dir.path(), "p.json", r#"{"players": 2, "kind": "wta"}"#);
    let profile = write(dir.path(), "bad.json", r#"[["0.6", "0.6"], ["1", "0"]]"#);
    let run = bin(&["--json", "check-eq", "--market", s(&market), "--plan", s(&plan), "--profile", s(&profile)]);
    assert_eq!(run.code, 1);
    assert_eq!(run.json()["error"]["kind"], "NonSimplexWeights");
    let text = bin(&["check-eq", "--market", s(&market), "--plan", s(&plan), "--profile", s(&profile)]);
    assert_eq!(text.code, 1);
    assert!(text.stderr.contains("NonSimplexWeights"));
}

#[test]
fn check_eq_reports() {
    let dir = tempfile::tempdir().unwrap();
    let market = write(dir.path(), "m.json", TWO_BONDS);
    let plan = write(dir.path(), "p.json", r#"{"players": 2, "kind": "wta"}"#);
    let risky = write(dir.path(), "risky.json", "[[0, 1], [0, 1]]");
    let safe = write(dir.path(), "safe.json", r#"[["1", "0"], ["1", "0"]]"#);
    let args = |profile: &Path, resolution: &str| {
        bin(&[
            "--json", "check-eq", "--market", s(&market), "--plan", s(&plan), "--profile", s(profile),
            "--lambda", "1/2", "--resolution", resolution,
        ])
    };
    assert_eq!(args(&risky, "pure").json()["verdict"], "equilibrium");
    assert_eq!(args(&risky, "20").json()["verdict"], "no_violation_at_resolution");
    let report = args(&safe, "pure").json();
    assert_eq!(report["verdict"], "not_equilibrium");
    assert_eq!(report["players"][0]["gain"], "1/20");
}

#[test]
fn build_and_check_plans() {
    let dir = tempfile::tempdir().unwrap();
    let market = write(dir.path(), "m.json", TWO_BONDS);
    let linear = dir.path().join("linear.json");
    let run = bin(&["build-linear", "--market", s(&market), "--players", "2", "--out", s(&linear)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("M = 1.051"));
    let optimal = bin(&["--json", "check-optimal", "--market", s(&market), "--plan", s(&linear), "--resolution", "10"]);
    assert_eq!(optimal.json()["verdict"], "optimal");
    assert_eq!(optimal.json()["mu_star"], "21/20");

    let bounded = dir.path().join("bounded.json");
    let run = bin(&["--json", "build-bounded", "--market", s(&market), "--players", "2", "--grid", "10", "--out", s(&bounded)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.json()["plan"]["bound"], "1/20");
    let optimal = bin(&["check-optimal", "--market", s(&market), "--plan", s(&bounded), "--players", "2"]);
    assert!(optimal.stdout.contains("verdict: optimal"), "{}", optimal.stdout);

    let wta = write(dir.path(), "wta.json", r#"{"players": 2, "kind": "wta"}"#);
    let run = bin(&["--json", "check-optimal", "--market", s(&market), "--plan", s(&wta)]);
    assert_eq!(run.json()["verdict"], "not_optimal_among_checked_profiles");
}

#[test]
fn plan_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let market = write(dir.path(), "m.json", TWO_BONDS);
    let run = bin(&["build-linear", "--market", s(&market), "--players", "3"]);
    let plan = BonusPlan::from_json(&run.stdout).unwrap();
    assert_eq!(plan.to_json().trim(), run.stdout.trim());
    let again = BonusPlan::from_json(&plan.to_json()).unwrap();
    assert_eq!(again, plan);

    let m = Market::from_json(TWO_BONDS).unwrap();
    assert_eq!(Market::from_json(&m.to_json()).unwrap(), m);
    assert!(m.to_json().contains("\"1051/1000\""));
}

#[test]
fn find_m_json() {
    let dir = tempfile::tempdir().unwrap();
    let market = write(dir.path(), "m.json", TWO_BONDS);
    let run = bin(&["--json", "find-m", "--market", s(&market), "--grid", "10"]);
    assert_eq!(run.code, 0);
    let doc = run.json();
    assert_eq!(doc["bound"], "1/20");
    assert_eq!(doc["c"], "97/50000");
    assert_eq!(doc["witnesses"].as_array().unwrap().len(), 10);
    let text = bin(&["find-m", "--market", s(&market), "--grid", "10"]);
    assert!(text.stdout.contains("M = 0.05"));
}

#[test]
fn induce_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let market = write(dir.path(), "m.json", TWO_BONDS);
    let plan = write(dir.path(), "p.json", r#"{"players": 2, "kind": "lta"}"#);
    let run = bin(&["--json", "induce", "--market", s(&market), "--plan", s(&plan)]);
    assert_eq!(run.code, 0);
    let entries = run.json()["entries"].as_array().unwrap().clone();
    assert_eq!(entries.len(), 4);
    assert_eq!(entries[1]["payoffs"], serde_json::json!(["3/5", "2/5"]));

    let capped = bin(&["--tensor-cap", "3", "induce", "--market", s(&market), "--plan", s(&plan)]);
    assert_eq!(capped.code, 1);
    assert!(capped.stderr.contains("TensorCapExceeded"));

    let ok = bin(&["validate-plan", "--plan", s(&plan), "--samples", "50", "--seed", "3"]);
    assert_eq!(ok.code, 0);
    assert!(ok.stdout.contains("all shares on the simplex"));
    let bad = write(dir.path(), "bad.json", r#"{"players": 2, "kind": "tabulated", "points": [{"r": ["0", "0"], "shares": ["0.6", "0.6"]}], "fallback": ["1/2", "1/2"]}"#);
    assert_eq!(bin(&["validate-plan", "--plan", s(&bad)]).code, 1);
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&[]).code, 2);
    assert_eq!(bin(&["frobnicate"]).code, 2);
    assert_eq!(bin(&["find-m", "--grid", "10"]).code, 2);
    assert_eq!(bin(&["find-m", "--market", "/nonexistent/market.json", "--grid", "10"]).code, 1);
    assert_eq!(bin(&["--version"]).code, 0);
}
