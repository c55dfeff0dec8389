//! Drives the `thermal-bell` binary: outputs, exit codes and determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermal-bell")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn analytic_prints_exact_fractions() {
    let out = run(&["analytic", "--m", "1..=4"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "m,order,v_num,v_den,visibility");
    assert!(rows[1].starts_with("1,2,1,3,"));
    assert!(rows[4].starts_with("4,5,2,3,"));
}

#[test]
fn bell_reports_the_m5_violation() {
    let out = run(&["bell", "--four-term", "--m", "5", "--bound", "upper"]);
    assert_eq!(code(&out), 0);
    let json: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let report = &json["evaluations"][0]["report"];
    assert!(report["violates_upper"].as_bool().unwrap());
    let s = report["statistic"].as_f64().unwrap();
    assert!((s - (5.0 / 28.0 * 2.0 * 2f64.sqrt() - 0.5)).abs() < 1e-12);
    assert_eq!(json["min_violating_m"], 5);
}

#[test]
fn config_errors_exit_with_2() {
    assert_eq!(code(&run(&["analytic", "--m", "3..1"])), 2);
    assert_eq!(code(&run(&["analytic", "--m", "0"])), 2);
    assert_eq!(code(&run(&["bell", "--vis", "1.5"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"m": {"min": 1, "max": 2}, "colour": "blue"}"#).unwrap();
    assert_eq!(code(&run(&["analytic", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn numeric_guard_exits_with_3() {
    let out = run(&["quantum", "--m", "1", "--nbar", "0.2", "--delta1", "0", "--dim", "3"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn io_failures_exit_with_4() {
    assert_eq!(code(&run(&["correlate", "--input", "/nonexistent/frames.spkl"])), 4);
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.spkl");
    std::fs::write(&junk, b"not a frame file").unwrap();
    assert_eq!(code(&run(&["correlate", "--input", junk.to_str().unwrap()])), 4);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("analytic.json");
    std::fs::write(&cfg, r#"{"m": {"min": 1, "max": 8}}"#).unwrap();
    let from_file = stdout(&run(&["analytic", "--config", cfg.to_str().unwrap()]));
    assert_eq!(from_file.lines().count(), 9);
    let overridden = stdout(&run(&["analytic", "--config", cfg.to_str().unwrap(), "--m", "2"]));
    assert_eq!(overridden.lines().count(), 2);
}

fn simulate(path: &Path, seed: &str) -> Output {
    run(&["simulate", "--frames", "600", "--seed", seed, "--out", path.to_str().unwrap()])
}

#[test]
fn simulate_is_deterministic_and_correlate_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.spkl"), dir.path().join("b.spkl"), dir.path().join("c.spkl"));
    assert_eq!(code(&simulate(&a, "11")), 0);
    assert_eq!(code(&simulate(&b, "11")), 0);
    assert_eq!(code(&simulate(&c, "12")), 0);
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert!(dir.path().join("a.spkl.json").exists());

    let out_dir = dir.path().join("analysis");
    let out = run(&["correlate", "--input", a.to_str().unwrap(), "--m", "1..2", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(out_dir.join("visibility.csv")).unwrap();
    assert!(table.starts_with("m,v_theory,v_hat,stderr"));
    assert_eq!(table.lines().count(), 3);
    let curve = std::fs::read_to_string(out_dir.join("curve_m1.csv")).unwrap();
    assert!(curve.starts_with("x2_pixel,delta_rad,g_value,stderr"));
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["n_frames"], 600);
}
