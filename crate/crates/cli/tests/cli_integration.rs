//! End-to-end checks of the command-line interface: config parsing, report
//! emission, exit codes, trajectory files and byte-level determinism.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaudin"))
}

fn write_config(dir: &Path, suites: &[&str], flow: bool) -> std::path::PathBuf {
    let flow_section = if flow {
        r#","flow": {"which": "h0", "t_end": 0.05, "dt": 0.005}"#
    } else {
        ""
    };
    let body = format!(
        r#"{{
  "model": {{"n_inner": 2, "m_blocks": 2, "n_poles": 2, "tau": [0.0, 1.0]}},
  "seeds": [1, 2],
  "suites": [{}],
  "output_dir": "{}"{}
}}"#,
        suites
            .iter()
            .map(|s| format!("\"{s}\""))
            .collect::<Vec<_>>()
            .join(", "),
        dir.join("out").display(),
        flow_section,
    );
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn temp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("gaudin-cli-test-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn verify_runs_and_reports() {
    let dir = temp_dir("verify");
    let cfg = write_config(&dir, &["torus-basis"], false);
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[pass]"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(
        checks.len() >= 6,
        "expected at least six checks, got {}",
        checks.len()
    );
    assert!(checks.iter().all(|c| c["pass"].as_bool().unwrap()));
    for c in checks {
        assert!(!c["paper_anchor"].as_str().unwrap().is_empty());
    }
}

#[test]
fn unknown_suite_is_rejected_by_name() {
    let dir = temp_dir("badsuite");
    let cfg = write_config(&dir, &["no-such-suite"], false);
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no-such-suite"), "{stderr}");
}

#[test]
fn malformed_config_reports_location() {
    let dir = temp_dir("badjson");
    let path = dir.join("config.json");
    fs::write(&path, "{\"model\": {\"n_inner\": 2,}}").unwrap();
    let out = bin()
        .args(["verify", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("parse"), "{stderr}");
}

#[test]
fn verify_is_deterministic_modulo_wall_time() {
    let dir = temp_dir("determinism");
    let cfg = write_config(&dir, &["torus-basis", "degenerations"], false);
    let run = || {
        let out = bin()
            .args(["verify", "--config"])
            .arg(&cfg)
            .output()
            .unwrap();
        assert!(out.status.success());
        let mut rep: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap())
                .unwrap();
        for c in rep["checks"].as_array_mut().unwrap() {
            c["wall_time_ms"] = serde_json::json!(0.0);
        }
        serde_json::to_string(&rep).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "reports differ beyond wall-time fields");
}

#[test]
fn simulate_writes_trajectory_files() {
    let dir = temp_dir("simulate");
    let cfg = write_config(&dir, &[], true);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.join("out/trajectory.csv")).unwrap();
    let mut lines = csv.split("\r\n").filter(|l| !l.is_empty());
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,q0_re,q0_im"));
    let cols = header.split(',').count();
    for line in lines {
        assert_eq!(line.split(',').count(), cols, "ragged CSV row");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap();
    assert!(summary["H0_drift"].as_f64().unwrap() < 1e-6);
    assert!(summary["trace_power_drifts"].as_f64().unwrap() < 1e-6);
    assert!(header.contains("trace_power_2_re"));
    assert!(fs::metadata(dir.join("out/trajectory.json")).unwrap().len() > 0);
}

#[test]
fn degenerate_subcommand_passes() {
    let dir = temp_dir("degenerate");
    let cfg = write_config(&dir, &[], false);
    let out = bin()
        .args(["degenerate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 7);
}
