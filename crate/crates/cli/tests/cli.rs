use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const FAST: &str = r#"{"t_ramp_ns": 2.0, "dt_ns": 0.001, "shuttle_times_ns": [0.5, 1.0, 2.0, 4.0], "shift_deltas": [0.0, 0.01, 0.1]}"#;

fn spingate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spingate")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn config_echo(csv: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix("# config: "))
        .expect("config echo present")
        .to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn dipolar_defaults_match_quoted_coefficients() {
    let o = spingate(&["dipolar"]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    let expected = [("electron-electron", 105e6), ("electron-nucleus", 64e3), ("nucleus-nucleus", 40.0)];
    assert_eq!(rows.len(), 3);
    for (row, (name, hz)) in rows.iter().zip(expected) {
        assert_eq!(row[0], name);
        let v: f64 = row[2].parse().unwrap();
        assert!((v / hz - 1.0).abs() < 0.02, "{name}: {v}");
    }
    let summary = String::from_utf8(o.stderr).unwrap();
    assert!(summary.contains("MHz") && summary.contains("kHz"), "{summary}");
}

#[test]
fn identities_pass_and_negative_control_fails() {
    let dir = TempDir::new().unwrap();
    let ok = write(&dir, "ok.json", r#"{"random_samples": 2000}"#);
    let o = spingate(&["verify-identities", "--config", &ok]);
    assert_eq!(o.status.code(), Some(0));
    assert!(data_rows(&stdout(&o)).iter().all(|r| r[3] == "true"));

    let bad = write(&dir, "bad.json", r#"{"random_samples": 2000, "corrupt_convention": true}"#);
    let o = spingate(&["verify-identities", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(data_rows(&stdout(&o)).iter().any(|r| r[3] == "false"));
}

#[test]
fn identity_report_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"random_samples": 500, "seed": 42}"#);
    let a = spingate(&["verify-identities", "--config", &cfg]);
    let b = spingate(&["verify-identities", "--config", &cfg]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn universality_passes() {
    let o = spingate(&["universality"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(data_rows(&stdout(&o)).len(), 3);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let unknown = write(&dir, "u.json", r#"{"b_mt": 100, "magnetic_field": 1}"#);
    let invalid = write(&dir, "i.json", r#"{"dt_ns": 0.003}"#);
    let syntax = write(&dir, "s.json", "{");
    let missing = dir.path().join("absent.json");
    for cfg in [unknown.as_str(), invalid.as_str(), syntax.as_str(), missing.to_str().unwrap()] {
        let o = spingate(&["dipolar", "--config", cfg]);
        assert_eq!(o.status.code(), Some(1), "{cfg}");
        assert!(o.stdout.is_empty());
    }
    assert_eq!(spingate(&["dipolar", "--jobs", "0"]).status.code(), Some(1));
}

#[test]
fn missing_table_is_a_config_error() {
    let o = spingate(&["calibrate-tau", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "t.json", r#"{"hyperfine_table": "/nonexistent/table.csv"}"#);
    assert_eq!(spingate(&["calibrate-tau", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn table_model_drives_calibration() {
    let dir = TempDir::new().unwrap();
    let mut table = String::from("E_MV_per_m,A_MHz\n");
    for k in 0..=30 {
        let e = -2.0 + 0.5 * k as f64;
        let a = 117.0 * (1.0 - 2.74e-3 * (e - 2.0) * (e - 2.0)) * if e > 6.0 { (-(e - 6.0)).exp() } else { 1.0 };
        table.push_str(&format!("{e},{a}\n"));
    }
    let t = write(&dir, "table.csv", &table);
    let cfg = write(&dir, "c.json", &format!(r#"{{"hyperfine_table": "{t}", "t_ramp_ns": 4.0, "dt_ns": 0.001}}"#));
    let out = dir.path().join("tau.csv");
    let o = spingate(&["calibrate-tau", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out).unwrap();
    let f: f64 = data_rows(&csv).iter().find(|r| r[0] == "f").unwrap()[1].parse().unwrap();
    assert!((f.abs() - std::f64::consts::PI).abs() < 1e-6, "{f}");
}

#[test]
fn calibrate_reports_pi_phase() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", FAST);
    let o = spingate(&["calibrate-tau", "--config", &cfg]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    let get = |k: &str| -> f64 { rows.iter().find(|r| r[0] == k).unwrap()[1].parse().unwrap() };
    assert!((get("f").abs() - std::f64::consts::PI).abs() < 1e-6);
    assert!((get("tau_ns") - 1e3 / (2.0 * 117.0)).abs() < 0.01);
}

#[test]
fn baseline_only_shift_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"t_ramp_ns": 2.0, "dt_ns": 0.001, "shift_deltas": [0.0], "shift_kinds": ["static"]}"#,
    );
    let o = spingate(&["sweep-shift", "--config", &cfg]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "kind,delta_E_MV_per_m,channel,delta_rad,worst_case_probability"));
    let rows = data_rows(&text);
    // Seven Z-strings on three qubits plus leakage.
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[0] == "static" && r[1] == "0"));
}

fn run_to(dir: &TempDir, cmd: &str, cfg: &str, name: &str, jobs: &str) -> String {
    let out = dir.path().join(name);
    let o = spingate(&[cmd, "--config", cfg, "--out", out.to_str().unwrap(), "--jobs", jobs]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn config_echo_reproduces_output_bit_for_bit() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", FAST);
    for cmd in ["sweep-shuttle", "sweep-shift"] {
        let first = run_to(&dir, cmd, &cfg, "first.csv", "2");
        let echo = write(&dir, "echo.json", &config_echo(&first));
        let second = run_to(&dir, cmd, &echo, "second.csv", "2");
        assert_eq!(first, second, "{cmd}");
    }
}

#[test]
fn output_does_not_depend_on_job_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", FAST);
    let one = run_to(&dir, "sweep-shuttle", &cfg, "one.csv", "1");
    let four = run_to(&dir, "sweep-shuttle", &cfg, "four.csv", "4");
    assert_eq!(one, four);
}

#[test]
fn shuttle_summary_names_the_threshold_crossing() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", FAST);
    let out = dir.path().join("s.csv");
    let o = spingate(&["sweep-shuttle", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let summary = stdout(&o);
    let rows = data_rows(&std::fs::read_to_string(&out).unwrap());
    let first = rows
        .iter()
        .find(|r| r[1].parse::<f64>().unwrap() < 1e-4)
        .map(|r| r[0].clone())
        .expect("some time is adiabatic");
    assert!(summary.contains(&format!("at T = {first} ns")), "{summary}");
}

#[test]
fn schedule_starts_and_ends_at_the_isolated_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"t_ramp_ns": 2.0, "dt_ns": 0.01, "tau": 1.5}"#);
    let o = spingate(&["schedule", "--config", &cfg]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    let e = |r: &Vec<String>| r[1].parse::<f64>().unwrap();
    assert_eq!(e(&rows[0]), 10.0);
    assert!((e(rows.last().unwrap()) - 10.0).abs() < 1e-12);
    let t_end: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert!((t_end - 5.5).abs() < 1e-9);
}

#[test]
fn help_lists_every_subcommand() {
    let o = spingate(&["--help"]);
    let text = stdout(&o);
    for cmd in ["verify-identities", "calibrate-tau", "sweep-shuttle", "sweep-shift", "dipolar", "universality"] {
        assert!(text.contains(cmd), "{cmd}");
    }
    assert!(Path::new(env!("CARGO_BIN_EXE_spingate")).exists());
}
