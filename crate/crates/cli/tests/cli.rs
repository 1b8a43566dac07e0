use std::path::Path;
use std::process::{Command, Output};

use petube::config::Builtin;

fn petube(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_petube"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_reports_design_checks() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.json", Builtin::Identification.json());
    let out = petube(&["validate", &good]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");

    let mut cfg = Builtin::Identification.config();
    cfg.sets.w = petube::Polytope::symmetric_box(&[5.0]).unwrap();
    let bad = write_config(dir.path(), "bad.json", &cfg.to_json().unwrap());
    let out = petube(&["validate", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn malformed_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "broken.json", "{ \"schema_version\": 1, ");
    let out = petube(&["validate", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn run_writes_outputs_and_reuses_cache() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Builtin::Regulation.config();
    cfg.simulation.steps = 12;
    let path = write_config(dir.path(), "reg.json", &cfg.to_json().unwrap());
    let out_dir = dir.path().join("out");
    let out_str = out_dir.to_str().unwrap();

    let out = petube(&["run", &path, "--out", out_str]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "trajectory.csv",
        "summary.json",
        "ingredients.json",
        "states.dat",
        "inputs.dat",
        "parameters.dat",
    ] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["steps_completed"], 12);
    assert_eq!(summary["all_monitors_passed"], true);

    // A second run with the cache in place gives the same trajectory.
    let cache_before = std::fs::read(out_dir.join("ingredients.json")).unwrap();
    let out = petube(&["run", &path, "--out", out_str]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap(),
        csv
    );
    assert_eq!(
        std::fs::read(out_dir.join("ingredients.json")).unwrap(),
        cache_before
    );
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "reg.json", Builtin::Regulation.json());
    // A regular file where the output directory should be.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let out = petube(&["run", &path, "--out", blocker.join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sets_writes_cache_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "id.json", Builtin::Identification.json());
    let cache = dir.path().join("sets.json");
    let out = petube(&["sets", &path, "--out", cache.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cache).unwrap()).unwrap();
    assert_eq!(
        value["hash"],
        Builtin::Identification.config().ingredients_hash().unwrap()
    );
}

#[test]
fn reproduce_regulation_passes() {
    let out = petube(&["reproduce", "regulation"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn reproduce_table_prints_comparison() {
    let out = petube(&["reproduce", "table1"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("A11") && stdout.contains("B21"), "{stdout}");
    // The A12 entry of the reference cannot be matched; see README.
    assert_eq!(out.status.code(), Some(1));
}
