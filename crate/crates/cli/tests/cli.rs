use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cqed_cli::commands::SWEEP_COLUMNS;
use serde_json::Value;

const CONFIGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");

fn cqed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn pinned(name: &str) -> String {
    fs::read_to_string(Path::new(CONFIGS).join(name)).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const QUBIT: &str = r#"
[resonator]
impedance_ohm = 50.0
line_capacitance_ff = 850.0
half_length_mm = 4.0
junction_capacitance_ff = 10.0
n_modes = 1
target_freq_ghz = 7.0
phase_slip = 0.1218

[[qubit]]
ej_ghz = 221.0
alpha = 1.2
alpha4 = 0.058
f1 = 0.505
n_max = 10
target_freq_ghz = 10.94
"#;

#[test]
fn modes_reports_increasing_frequencies_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(CONFIGS).join("modes_7ghz.toml");
    let out = cqed(&["modes", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read_json(&dir.path().join("modes_7ghz.json"));
    let f: Vec<f64> = report["modes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["freq_ghz"].as_f64().unwrap())
        .collect();
    assert_eq!(f.len(), 3);
    assert!((f[0] - 7.0).abs() < 1e-6);
    assert!(f[0] < f[1] && f[1] < f[2]);
    let meta = read_json(&dir.path().join("modes_7ghz.meta.json"));
    assert_eq!(meta["tool"], "cqed");
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["resonator"]["target_freq_ghz"], 7.0);
    assert!(meta["resolved"]["resonator"]["junction_inductance_nh"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_field_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &pinned("modes_7ghz.toml").replace("half_length_mm = 4.0\n", ""));
    let out = cqed(&["modes", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("half_length_mm"), "{}", stderr(&out));
}

#[test]
fn qubit_calibrates_to_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "q.toml", QUBIT);
    let out = cqed(&["qubit", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let q = &read_json(&dir.path().join("qubit.json"))[0];
    assert!((q["omega_q_ghz"].as_f64().unwrap() - 10.94).abs() < 0.01);
    assert!((q["g_over_omega_r"].as_f64().unwrap() - 0.446).abs() < 0.001);
}

fn sweep_config(axes: &str) -> String {
    format!("{QUBIT}\n{axes}\n[output]\nstem = \"s\"\n")
}

fn run_sweep(dir: &Path, axes: &str) -> (Output, PathBuf) {
    let cfg = write(dir, "s.toml", &sweep_config(axes));
    let out_dir = dir.join("out");
    let out = cqed(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seedless"]);
    (out, out_dir.join("s.csv"))
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn sweep_is_deterministic_and_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let axes = "[[sweep.axis]]\nvariable = \"alpha\"\nvalues = [1.1, 1.3]\n\n[[sweep.axis]]\nvariable = \"f1\"\nstart = 0.49\nstop = 0.51\npoints = 3\n";
    let (out, csv) = run_sweep(dir.path(), axes);
    assert!(out.status.success(), "{}", stderr(&out));
    let first = fs::read(&csv).unwrap();
    let (header, rows) = csv_rows(&csv);
    assert_eq!(header, SWEEP_COLUMNS);
    assert_eq!(rows.len(), 6);
    let grid: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    let expect = [(1.1, 0.49), (1.1, 0.5), (1.1, 0.51), (1.3, 0.49), (1.3, 0.5), (1.3, 0.51)];
    for (g, e) in grid.iter().zip(expect) {
        assert!((g.0 - e.0).abs() < 1e-12 && (g.1 - e.1).abs() < 1e-12, "{g:?} vs {e:?}");
    }
    // Twelve significant digits throughout.
    assert!(rows[0][4].contains('.') && rows[0][4].split('e').next().unwrap().len() >= 13);
    let (again, csv2) = run_sweep(dir.path(), axes);
    assert!(again.status.success());
    assert_eq!(first, fs::read(csv2).unwrap());
    let meta = read_json(&dir.path().join("out/s.meta.json"));
    assert_eq!(meta["seedless"], true);
    assert_eq!(meta["command"], "sweep");
}

#[test]
fn single_point_axis_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = run_sweep(dir.path(), "[[sweep.axis]]\nvariable = \"f1\"\nvalues = [0.505]\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("at least 2"), "{}", stderr(&out));
}

#[test]
fn failed_points_keep_their_row() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = run_sweep(dir.path(), "[[sweep.axis]]\nvariable = \"alpha\"\nvalues = [1.2, -1.0]\n");
    assert!(out.status.success(), "{}", stderr(&out));
    let (_, rows) = csv_rows(&csv);
    assert_eq!(rows.len(), 2);
    assert!(rows[0][14].is_empty());
    assert_eq!(rows[1][4], "NaN");
    assert!(rows[1][14].contains("alpha"), "{:?}", rows[1]);
}

#[test]
fn coupler_flux_flips_coupling_sign() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = run_sweep(dir.path(), "[[sweep.axis]]\nvariable = \"f3\"\nvalues = [0.0, 1.0]\n");
    assert!(out.status.success(), "{}", stderr(&out));
    let (_, rows) = csv_rows(&csv);
    let g: Vec<f64> = rows.iter().map(|r| r[13].parse().unwrap()).collect();
    assert!((g[0] - 0.446).abs() < 0.001 && (g[0] + g[1]).abs() < 1e-12, "{g:?}");
}

fn gate(dir: &Path, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write(dir, "g.toml", config);
    let out_dir = dir.join("gate");
    let mut args = vec!["gate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    (cqed(&args), out_dir.join("gate_table.json"))
}

#[test]
fn gate_reports_fidelity_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = gate(dir.path(), &pinned("gate_table.toml"), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = read_json(&report);
    assert!(r["fidelity"].as_f64().unwrap() >= 0.996);
    assert!((r["gate_time_ns"].as_f64().unwrap() - 1.0 / 8.01).abs() < 1e-9);
    assert!((r["omega_r_t1"].as_f64().unwrap() - 0.86).abs() < 0.005);
}

#[test]
fn weak_coupling_is_unsatisfiable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pinned("gate_table.toml").replace("g_over_omega_r = 0.509", "g_over_omega_r = 0.3");
    let (out, _) = gate(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("pi/16 = 0.19635"), "{}", stderr(&out));
}

#[test]
fn truncation_exits_as_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = gate(dir.path(), &pinned("gate_table.toml"), &["--fock", "6"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("truncation"), "{}", stderr(&out));
}

#[test]
fn multimode_report_lists_each_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = gate(dir.path(), &pinned("gate_table.toml"), &["--modes", "3", "--fock", "12"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let three = read_json(&report);
    let (single_out, single) = gate(dir.path(), &pinned("gate_table.toml"), &["--fock", "12"]);
    assert!(single_out.status.success());
    let one = read_json(&single);
    let modes = three["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 3);
    assert!(modes.iter().all(|m| m["max_mean_occupation"].as_f64().unwrap() > 0.0));
    let n3 = modes[0]["max_mean_occupation"].as_f64().unwrap();
    let n1 = one["modes"][0]["max_mean_occupation"].as_f64().unwrap();
    assert!((n3 - n1).abs() < 0.1 * n1, "{n3} vs {n1}");
}

#[test]
fn unknown_figure_lists_valid_ids() {
    let out = cqed(&["reproduce", "fig3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for id in ["fig2a", "fig2b", "fig2c", "fig2d", "gate-table"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn reproduce_writes_data_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = cqed(&["reproduce", "fig2c", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[PASS] g/omega_r at f3 = 1"), "{stdout}");
    let (_, rows) = csv_rows(&dir.path().join("fig2c.csv"));
    assert_eq!(rows.len(), 2 * 51);
    let (header, checks) = csv_rows(&dir.path().join("fig2c_checks.csv"));
    assert_eq!(header, ["check", "value", "expected", "pass"]);
    assert_eq!(checks.len(), 4);
    assert!(dir.path().join("fig2c.meta.json").exists());
}
