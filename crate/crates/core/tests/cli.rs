//! End-to-end runs of the `dcmg` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn dcmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcmg")).args(args).output().expect("spawn dcmg")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn analyze_case_a() {
    let out = dcmg(&["analyze", scenario("case_a").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["verdict"], "certified-stable");
    assert!((rep["p_sup"].as_f64().unwrap() - 21315.8).abs() < 0.1);
    assert_eq!(rep["eigenvalues"].as_array().unwrap().len(), 6);
}

#[test]
fn analyze_case_d_is_over_the_gain_bound_but_not_unstable() {
    let out = dcmg(&["analyze", "--text", scenario("case_d").to_str().unwrap()]);
    let stdout = text(&out.stdout);
    assert!(stdout.contains("Delta1  = -84.2"), "{stdout}");
    // the eigenvalue check still finds every mode in the right half plane
    assert_eq!(out.status.code(), Some(1), "{stdout}");
    assert!(stdout.contains("verdict: oracle-stable-uncertified"));
}

#[test]
fn analyze_writes_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reports/c.json");
    let out = dcmg(&["analyze", scenario("case_c").to_str().unwrap(), "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!((rep["gamma1"].as_f64().unwrap() - 114.43).abs() < 0.01);
    assert!(text(&out.stdout).contains("verdict: certified-stable"));
}

#[test]
fn malformed_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let raw = std::fs::read_to_string(scenario("case_a")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&raw).unwrap();
    doc["network"]["r"] = serde_json::json!([2, 2, 1, 0.5, 0.5]);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = dcmg(&["analyze", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("network.r"), "{}", text(&out.stderr));

    doc["network"]["r"] = serde_json::json!([2, 2, "one", 0.5, 0.5, 2]);
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = dcmg(&["analyze", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("network.r"), "{}", text(&out.stderr));
}

#[test]
fn missing_file_and_bad_usage() {
    assert_eq!(dcmg(&["analyze", "/nonexistent/case.json"]).status.code(), Some(3));
    assert_eq!(dcmg(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(dcmg(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_case_a_writes_trace_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("a.csv");
    let out = dcmg(&["simulate", scenario("case_a").to_str().unwrap(), "--out", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}{}", text(&out.stdout), text(&out.stderr));

    let csv = std::fs::read_to_string(&trace).unwrap();
    let header = csv.lines().next().unwrap();
    let mut expected = vec!["t".to_string(), "u_L".into()];
    for prefix in ["i", "u", "di", "du"] {
        expected.extend((1..=6).map(|j| format!("{prefix}_{j}")));
    }
    assert_eq!(header, expected.join(","));

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["outcome"], "converged");
    assert!((summary["final_bus_voltage"].as_f64().unwrap() - 200.0).abs() <= 0.2);
    let events: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.events.json")).unwrap()).unwrap();
    assert_eq!(events.as_array().unwrap().len(), 1);
}

#[test]
fn simulate_case_e2_is_not_stable() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("e2.csv");
    let out = dcmg(&["simulate", scenario("case_e2").to_str().unwrap(), "--out", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stdout));
    // the partial trace is still written
    assert!(std::fs::read_to_string(&trace).unwrap().lines().count() > 100);
}

#[test]
fn simulate_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("short.csv");
    let out = dcmg(&[
        "simulate",
        scenario("case_a").to_str().unwrap(),
        "--out",
        trace.to_str().unwrap(),
        "--t-end",
        "0.2",
        "--dt",
        "1e-3",
    ]);
    // distributed control starts at 0.5 s, so the run ends in droop
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stdout));
    let rows = std::fs::read_to_string(&trace).unwrap().lines().count();
    assert_eq!(rows, 1 + 3);
}

fn flips(stderr: &str, quantity: &str) -> Vec<(f64, f64)> {
    stderr
        .lines()
        .filter(|l| l.starts_with(&format!("{quantity} flip")))
        .map(|l| {
            let nums: Vec<f64> = l.split_whitespace().filter_map(|w| w.parse().ok()).collect();
            (nums[nums.len() - 2], nums[nums.len() - 1])
        })
        .collect()
}

#[test]
fn sweep_load_brackets_max_load() {
    let out = dcmg(&["sweep", scenario("case_a").to_str().unwrap(), "--param", "P", "--range", "20000:22000:41"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(text(&out.stdout).lines().count(), 42);
    assert_eq!(flips(&text(&out.stderr), "max-load"), vec![(21300.0, 21350.0)]);
}

#[test]
fn sweep_delay_brackets_margin() {
    let out = dcmg(&["sweep", scenario("case_e").to_str().unwrap(), "--param", "tau", "--range", "0.25:0.35:21"]);
    let f = flips(&text(&out.stderr), "verdict");
    assert_eq!(f.len(), 1, "{}", text(&out.stderr));
    assert!(f[0].0 <= 0.3034 && 0.3034 <= f[0].1, "{f:?}");
    assert!((f[0].0 - 0.30).abs() < 1e-9);
}

#[test]
fn sweep_gain_brackets_certificate() {
    let out = dcmg(&["sweep", scenario("case_c").to_str().unwrap(), "--param", "b1", "--range", "200:260:61"]);
    let f = flips(&text(&out.stderr), "certificate");
    assert_eq!(f, vec![(228.0, 229.0)]);
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let out = dcmg(&["sweep", scenario("case_a").to_str().unwrap(), "--param", "gamma", "--range", "0:1:3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("gamma"));
    let out = dcmg(&["sweep", scenario("case_a").to_str().unwrap(), "--param", "P", "--range", "0:1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_is_seeded() {
    let a = dcmg(&["verify", "--seed", "5", "--scale", "0.2"]);
    let b = dcmg(&["verify", "--seed", "5", "--scale", "0.2"]);
    assert_eq!(a.status.code(), Some(0), "{}", text(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(text(&a.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
