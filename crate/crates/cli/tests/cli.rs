use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn case_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

fn gridshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshare"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_reports_the_shipped_case() {
    let out = gridshare(&["validate", "--case", path(&case_dir("15bus"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("15"));
}

#[test]
fn meshed_case_is_rejected_with_exit_one() {
    let mut case: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(case_dir("15bus").join("case.json")).unwrap()).unwrap();
    case["lines"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!({"l": 99, "o": 14, "r": 15, "R": 0.5, "X": 0.8}));
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("case.json");
    std::fs::write(&file, case.to_string()).unwrap();
    let out = gridshare(&["validate", "--case", path(&file)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn clear_writes_artifacts_and_echoes_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("peer");
    let out = gridshare(&[
        "clear",
        "--case",
        path(&case_dir("15bus")),
        "--mode",
        "peer",
        "--delta-rho",
        "0.2",
        "--out",
        path(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "summary.json",
        "settlement.csv",
        "dlmp.csv",
        "lines.csv",
        "revenue.json",
        "rounds.csv",
        "trace.csv",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["overrides"]["delta_rho"], serde_json::json!(0.2));
    assert_eq!(summary["mode"], "peer");
    assert!(String::from_utf8_lossy(&out.stdout).contains("| Configuration |"));
}

#[test]
fn report_renders_a_cleared_run_byte_stably() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("system");
    let clear = gridshare(&[
        "clear",
        "--case",
        path(&case_dir("15bus")),
        "--mode",
        "system",
        "--out",
        path(&run),
    ]);
    assert!(clear.status.success());
    let first = gridshare(&["report", path(tmp.path()), "--format", "csv"]);
    let second = gridshare(&["report", path(tmp.path()), "--format", "csv"]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn report_on_an_empty_directory_names_the_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gridshare(&["report", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("summary.json") && err.contains("sweep.json"), "{err}");
}

#[test]
fn short_sweep_writes_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gridshare(&[
        "sweep",
        "--case",
        path(&case_dir("15bus")),
        "--mode",
        "system",
        "--gamma-grid",
        "0,0.5",
        "--out",
        path(tmp.path()),
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "sweep.json",
        "sweep.csv",
        "buses.csv",
        "loading.csv",
        "manifest.json",
        "table.csv",
    ] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("Γ_b,0,0.5"));
}

#[test]
fn invalid_override_is_a_configuration_error() {
    let out = gridshare(&[
        "clear",
        "--case",
        path(&case_dir("15bus")),
        "--mode",
        "peer",
        "--trade-size=-1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn convert_produces_a_loadable_case() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("case.json");
    let out = gridshare(&["convert", "--case", path(&case_dir("141bus")), "--out", path(&file)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let check = gridshare(&[
        "validate",
        "--case",
        path(&file),
        "--peers",
        path(&case_dir("141bus").join("peers.json")),
    ]);
    assert!(check.status.success(), "{}", String::from_utf8_lossy(&check.stderr));
}
