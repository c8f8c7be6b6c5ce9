use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use popequil::cli::{Report, Study};

const EXACT_MODEL: &str =
    r#"{"family": "bdi_group_births", "a": 1.0, "b": 0.0, "d": 2.0, "offspring": [[1, 1.0]]}"#;
const GROUP_MODEL: &str =
    r#"{"family": "bdi_group_births", "a": 1.0, "b": 0.5, "d": 2.0, "offspring": [[1, 0.5], [2, 0.5]]}"#;

fn run_cli(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_popequil"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exact_family_convergence_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"model": {EXACT_MODEL}, "study": "convergence", "n_grid": [50, 100, 200, 400],
            "output": {{"formats": ["csv", "json", "plotdata"]}}}}"#
    );
    let out = run_cli(dir.path(), &cfg, &[]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).starts_with("convergence: 4 rows"));
    let csv = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "tv_to_centred_poisson").unwrap();
    let mut rows = 0;
    for line in lines {
        let tv: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!(tv <= 1e-8, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 4);
    assert!(dir.path().join("out/shift_tv.plotdata").exists());
}

#[test]
fn missing_grid_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(dir.path(), &format!(r#"{{"model": {EXACT_MODEL}, "study": "convergence"}}"#), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(err["error"], "ConfigError");
}

#[test]
fn module_errors_keep_their_names() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"{"family": "affine", "rates": [
        {"jump": 1, "intercept": 1.0, "slope": 1.0},
        {"jump": -1, "intercept": 0.0, "slope": 0.5}]}"#;
    let out = run_cli(dir.path(), &format!(r#"{{"model": {model}, "study": "equilibrium"}}"#), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(err["error"], "UnstableEquilibrium");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"model": {GROUP_MODEL}, "study": "simulate", "n": 30,
            "simulation": {{"seed": 9, "t_sample": 200.0, "replicas": 3}}}}"#
    );
    let read = |name: &str| fs::read(dir.path().join("out").join(name)).unwrap();
    assert!(run_cli(dir.path(), &cfg, &["--jobs", "1"]).status.success());
    let (occ, rep) = (read("occupation_30.csv"), read("report.json"));
    assert!(run_cli(dir.path(), &cfg, &["--jobs", "3"]).status.success());
    assert_eq!(occ, read("occupation_30.csv"));
    assert_eq!(rep, read("report.json"));
    assert!(run_cli(dir.path(), &cfg, &["--seed", "10"]).status.success());
    assert_ne!(occ, read("occupation_30.csv"));
}

#[test]
fn reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = format!(r#"{{"model": {GROUP_MODEL}, "study": "equilibrium", "n": 40, "n_grid": [20, 40, 80, 160],
        "simulation": {{"t_sample": 50.0}}, "stein": {{"v_grid": [0.5, 3.0]}}}}"#);
    for study in ["equilibrium", "assumptions", "stationary_once", "simulate", "stein_audit", "convergence"] {
        let out = run_cli(dir.path(), &base, &["--study", study]);
        assert!(out.status.success(), "{study}: {}", stdout(&out));
        assert_eq!(stdout(&out).lines().count(), 1);
        let text = fs::read_to_string(dir.path().join("out/report.json")).unwrap();
        let report: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", text);
        let want: Study = serde_json::from_value(serde_json::Value::String(study.into())).unwrap();
        assert_eq!(report.study, want);
    }
    for name in ["stationary_40.csv", "occupation_40.csv", "stein_audit.csv", "convergence.csv"] {
        let text = fs::read_to_string(dir.path().join("out").join(name)).unwrap();
        assert!(text.lines().count() > 1, "{name}");
    }
}
