use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn bihamil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bihamil"))
        .args(args)
        .env("BIHAMIL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn passing_scenario_exits_zero() {
    let out = bihamil(&["construct", path(&scenario("constant.json")), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["pass"], true);
    assert_eq!(r["kind"], "construct");
    assert_eq!(r["residuals"]["jacobi.1"]["pass"], true);
    assert_eq!(r["faults"].as_array().unwrap().len(), 3);
    assert_eq!(r["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn tolerance_failure_exits_one() {
    let out = bihamil(&["construct", path(&scenario("abc-flipped.json")), "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let r = json(&out);
    assert_eq!(r["pass"], false);
    assert!(r.get("error").is_none());
    assert_eq!(r["residuals"]["bihamiltonian.1"]["pass"], false);
}

#[test]
fn construction_error_exits_two() {
    let out = bihamil(&["construct", path(&scenario("radial-origin.json")), "--json"]);
    assert_eq!(out.status.code(), Some(2));
    let r = json(&out);
    assert!(r["error"]["kind"].is_string());
    assert!(!r["error"]["message"].as_str().unwrap().is_empty());
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(bihamil(&["construct", missing.to_str().unwrap()]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"field": "constant", "tube": {"ds": -1}}"#).unwrap();
    let out = bihamil(&["construct", bad.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["pass"], false);

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"field": "constant", "colour": "red"}"#).unwrap();
    assert_eq!(bihamil(&["construct", unknown.to_str().unwrap()]).status.code(), Some(2));

    let scale = bihamil(&["construct", path(&scenario("constant.json")), "--tolerance-scale", "-1"]);
    assert_eq!(scale.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic_apart_from_the_timestamp() {
    let run = || {
        let mut r = json(&bihamil(&["construct", path(&scenario("constant.json")), "--json"]));
        r["provenance"].as_object_mut().unwrap().remove("timestamp");
        r
    };
    assert_eq!(run(), run());
}

#[test]
fn tolerance_scale_tightens_bounds() {
    let r = json(&bihamil(&["construct", path(&scenario("constant.json")), "--json", "--tolerance-scale", "0.5"]));
    let tol = r["residuals"]["jacobi.1"]["tolerance"].as_f64().unwrap();
    let base = json(&bihamil(&["construct", path(&scenario("constant.json")), "--json"]));
    let base_tol = base["residuals"]["jacobi.1"]["tolerance"].as_f64().unwrap();
    assert!((tol - 0.5 * base_tol).abs() <= 1e-15 * base_tol);
}

#[test]
fn dump_samples_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bihamil(&["construct", path(&scenario("constant.json")), "--dump-samples", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let residuals = std::fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    let mut lines = residuals.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("x,y,z,s,"));
    assert!(header.contains("jacobi.1"));
    assert_eq!(lines.count(), 205);
    assert!(dir.path().join("tube.csv").exists());
}

#[test]
fn obstruct_reports_chern_and_bott() {
    let out = bihamil(&["obstruct", path(&scenario("constant.json")), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["obstruction"]["chern"]["result"]["number"], 0);
    assert!(r["obstruction"]["bott"]["integral"].is_number());

    let radial = json(&bihamil(&["obstruct", path(&scenario("radial.json")), "--json"]));
    assert_eq!(radial["obstruction"]["chern"]["result"]["number"], 2);
}

#[test]
fn converge_on_an_exact_field_marks_round_off() {
    let out = bihamil(&["converge", path(&scenario("constant.json")), "--levels", "3", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["convergence"]["rows"].as_array().unwrap().len(), 3);
    assert!(!r["convergence"]["at_roundoff"].as_array().unwrap().is_empty());
}

#[test]
fn fields_lists_the_registry() {
    let out = bihamil(&["fields"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["constant", "radial", "rotation", "shear", "abc", "beltrami", "periodic-pair"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}
