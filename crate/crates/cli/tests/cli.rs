use std::path::Path;
use std::process::Command;

fn sps(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sps"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_dataset_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = sps(&["simulate", "--preset", "sec6-n40", "--seed", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert!(csv.starts_with("t,u,y\n1,"));
    assert_eq!(csv.lines().count(), 41);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["master_seed"], 4);
    assert_eq!(report["result"]["system_stability"]["stable"], true);
}

#[test]
fn region_csv_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "system": {"a": [-0.7], "b": [1.0]},
            "input": {"kind": "ar1", "coeff": 0.75, "drive_variance": 1.0, "seed": 1},
            "noise": {"kind": "laplacian", "variance": 0.1},
            "n": 40, "m": 20, "q": 1,
            "grid": {"lower": [-0.8, 0.9], "upper": [-0.6, 1.1], "points_per_axis": [2, 2]}
        }"#,
    );
    let out = sps(&["region", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("region.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta_1,theta_2,rank,included");
    assert_eq!(lines.len(), 5);
    let ell: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ellipsoid.json")).unwrap()).unwrap();
    assert_eq!(ell["shape"].as_array().unwrap().len(), 4);
}

#[test]
fn region_on_a_dataset_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(sps(&["simulate", "--preset", "sec6-n400"], &sim).status.success());
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"system": {{"a": [-0.7], "b": [1.0]}}, "p": 0.9, "dataset": {:?},
                "grid": {{"lower": [-0.8, 0.9], "upper": [-0.6, 1.1], "points_per_axis": [5, 5]}}}}"#,
            sim.join("dataset.csv")
        ),
    );
    let out = sps(&["region", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["m"], 10);
    assert_eq!(report["result"]["q"], 1);
}

#[test]
fn enumerate_reports_a_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = sps(&["enumerate", "--preset", "sec6-n40", "--m", "3", "--q", "1"], dir.path());
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["coverage"], serde_json::json!({"num": 2, "den": 3}));
}

#[test]
fn coverage_report_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = sps(&["coverage", "--preset", "sec6-n40", "--trials", "50"], dir.path());
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in ["trials", "hits", "empirical", "nominal", "std_err", "rank_histogram"] {
        assert!(report["result"].get(key).is_some(), "missing {key}");
    }
    let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 51);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"system": {"a": [-0.7], "b": [1.0]},
            "input": {"kind": "ar1", "coeff": 0.75, "drive_variance": 1.0},
            "noise": {"kind": "laplacian", "variance": 0.1},
            "n": 40, "p": 0.95, "m": 30, "trials": 10}"#,
    );
    let out = sps(&["coverage", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p/m/q"));

    let bad = write_config(dir.path(), r#"{"system": {"a": [], "b": [1.0]}, "nn": 3}"#);
    assert_eq!(sps(&["coverage", "--config", &bad], dir.path()).status.code(), Some(2));
    assert_eq!(sps(&["coverage"], dir.path()).status.code(), Some(2));
    assert_eq!(sps(&["coverage", "--preset", "sec6-n40", "--trials", "0"], dir.path()).status.code(), Some(2));
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = sps(&["simulate", "--config", "/definitely/not/here.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = sps(&["simulate", "--preset", "sec6-n40"], &blocker.join("sub"));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn degenerate_ellipsoid_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // a constant zero input never excites the exogenous parameter
    let cfg = write_config(
        dir.path(),
        r#"{"system": {"a": [-0.7], "b": [1.0]},
            "input": {"kind": "constant", "value": 0.0},
            "noise": {"kind": "gaussian", "variance": 0.1},
            "n": 40, "m": 20, "q": 1,
            "grid": {"lower": [-0.8, 0.9], "upper": [-0.6, 1.1], "points_per_axis": [3, 3]}}"#,
    );
    let out = sps(&["region", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
