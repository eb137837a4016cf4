use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn polyvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyvar")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const ADMISSIBLE: &str = "[params]\nm = 1\nbeta_factor = 2.0\n";

#[test]
fn solve_writes_report_and_profile_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.toml", ADMISSIBLE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = polyvar(&["solve", "--config", &config, "--out", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = polyvar(&["--workers", "2", "solve", "--config", &config, "--out", b.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    let report: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["schema"], "polyvar_report_v1");
    assert_eq!(report["verification"]["all_ok"], true);
    assert!(report["lambda"].as_f64().unwrap() > 0.0);

    let csv = std::fs::read_to_string(a.join("profile.csv")).unwrap();
    assert!(csv.starts_with("r,u\n"));
    assert_eq!(csv.lines().count(), 1025);

    let report_path = a.join("report.json");
    let out = polyvar(&["verify", report_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let check: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(check["all_ok"], true);

    // a corrupted multiplier must fail the recomputed checks
    let mut tampered = report.clone();
    tampered["lambda"] = Value::from(0.0);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_vec(&tampered).unwrap()).unwrap();
    assert_eq!(code(&polyvar(&["verify", bad.to_str().unwrap()])), 3);
}

#[test]
fn gate_refuses_small_beta_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "low.toml", "[params]\nm = 1\nbeta_factor = 0.5\n");
    let out = polyvar(&["solve", "--config", &config, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("threshold"), "{stderr}");
    assert!(!dir.path().join("o/report.json").exists());

    let out = polyvar(&["solve", "--force", "--config", &config, "--out", dir.path().join("f").to_str().unwrap()]);
    assert!(matches!(code(&out), 0 | 2 | 3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gate_refuses_large_quartic_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "eta.toml", "[params]\nm = 1\neta_c4_rho = 2.5\nbeta = 20.0\n");
    let out = polyvar(&["solve", "--config", &config]);
    assert_eq!(code(&out), 4);
}

#[test]
fn malformed_config_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.toml", "[params]\nm = 1\nbeta = [1, 2\n");
    let out = polyvar(&["solve", "--config", &config]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    assert_eq!(code(&polyvar(&["solve", "--config", "/nonexistent/x.toml"])), 1);
    assert_eq!(code(&polyvar(&["bogus"])), 1);
}

#[test]
fn audit_passes_for_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "audit.toml", "[params]\nm = 1\nbeta = 1.0\n");
    let out = polyvar(&["audit", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_passed"], true);
}

#[test]
fn gn_reports_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gn.json");
    let out = polyvar(&["gn", "--p", "4", "--m", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let est: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(est["validation"]["count"], 1000);
    assert_eq!(est["validation"]["violations"], 0);
    assert_eq!(est["schema"], "polyvar_report_v1");
}

#[test]
fn mt_probe_detects_growth() {
    let out = polyvar(&["mt-probe", "--alpha-ratio", "1.5", "--m", "1"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "GROWING");
}
