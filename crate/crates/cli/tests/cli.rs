use std::path::{Path, PathBuf};
use std::process::Command;

use mor_core::{Complex64, ReducedModel};

const CONFIG: &str = r#"{
  "con_patch": {"x": [0.1, 0.3], "y": [0.1, 0.3]},
  "obs_patch": {"x": [0.6, 0.8], "y": [0.6, 0.8]},
  "n_modes": 8,
  "quad_order": 24,
  "sample": {
    "sigmas": [[1, 0], [2, 0], [5, 1], [5, -1]],
    "rhos": [[1.5, 0], [3, 0], [6, 2], [6, -2]],
    "right_dirs": ["mode:1,1", "mode:1,2", "mode:2,1", "mode:2,2"],
    "left_dirs": ["mode:1,1", "mode:1,2", "mode:2,1", "mode:2,2"]
  }
}"#;

fn mor(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mor")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    config: PathBuf,
    data: PathBuf,
    rom: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(&config, CONFIG).unwrap();
    let data = dir.path().join("d.json");
    let rom = dir.path().join("rom.json");
    assert_eq!(mor(&["sample", "--config", s(&config), "--out", s(&data)]).0, 0);
    assert_eq!(mor(&["reduce", "--config", s(&config), "--data", s(&data), "--out", s(&rom)]).0, 0);
    Fixture { _dir: dir, config, data, rom }
}

#[test]
fn validate_passes_on_loewner_rom() {
    let f = fixture();
    let (code, out) = mor(&["validate", "--config", s(&f.config), "--rom", s(&f.rom), "--tol", "1e-8"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("\"all_pass\": true"));
}

#[test]
fn validate_fails_on_corrupted_e() {
    let f = fixture();
    let mut rom = ReducedModel::load(&f.rom).unwrap();
    let e01 = rom.e()[(0, 1)];
    rom.set_e_entry(0, 1, e01 * Complex64::new(1.01, 0.0));
    let bad = f.rom.with_file_name("bad.json");
    rom.save(&bad).unwrap();
    let (code, out) = mor(&["validate", "--config", s(&f.config), "--rom", s(&bad), "--data", s(&f.data), "--tol", "1e-8"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("\"all_pass\": false"));
}

#[test]
fn projection_method_matches_loewner_interpolation() {
    let f = fixture();
    let proj = f.rom.with_file_name("proj.json");
    let (code, _) = mor(&["reduce", "--config", s(&f.config), "--data", s(&f.data), "--out", s(&proj), "--method", "projection"]);
    assert_eq!(code, 0);
    assert_eq!(mor(&["validate", "--config", s(&f.config), "--rom", s(&proj), "--tol", "1e-8"]).0, 0);
}

#[test]
fn input_errors_exit_2() {
    let f = fixture();
    assert_eq!(mor(&["frobnicate"]).0, 2);
    assert_eq!(mor(&["validate", "--config", "/nonexistent.json", "--rom", s(&f.rom)]).0, 2);
    let bad = f.config.with_file_name("bad.json");
    std::fs::write(&bad, "{\"n_modes\": 4}").unwrap();
    assert_eq!(mor(&["h2", "--config", s(&bad)]).0, 2);
    assert_eq!(mor(&["reduce", "--config", s(&f.config), "--data", s(&f.data), "--out", s(&bad), "--method", "qz"]).0, 2);
}

#[test]
fn irka_writes_report_and_csv() {
    let f = fixture();
    let rom = f.rom.with_file_name("irka.json");
    let csv = f.rom.with_file_name("irka.csv");
    let (code, out) = mor(&["irka", "--config", s(&f.config), "--order", "2", "--init", "1,10", "--out", s(&rom), "--csv", s(&csv)]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("\"converged\": true"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("iteration,movement,residual,h2_error"));
    assert!(ReducedModel::load(&rom).unwrap().provenance().contains_key("config_sha256"));
}

#[test]
fn reports_carry_config_hash_and_version() {
    let f = fixture();
    let (code, out) = mor(&["h2", "--config", s(&f.config), "--rom", s(&f.rom)]);
    assert_eq!(code, 0);
    assert!(out.contains("\"config_sha256\""));
    assert!(out.contains(&format!("\"version\": \"{}\"", env!("CARGO_PKG_VERSION"))));
}

fn numbers(v: &serde_json::Value, out: &mut Vec<f64>) {
    match v {
        serde_json::Value::Number(n) => out.push(n.as_f64().unwrap()),
        serde_json::Value::Array(a) => a.iter().for_each(|x| numbers(x, out)),
        serde_json::Value::Object(m) => m.values().for_each(|x| numbers(x, out)),
        _ => {}
    }
}

#[test]
fn parallel_run_matches_serial() {
    let f = fixture();
    let serial = mor(&["--threads", "1", "h2", "--config", s(&f.config), "--rom", s(&f.rom)]);
    let parallel = mor(&["--threads", "4", "h2", "--config", s(&f.config), "--rom", s(&f.rom)]);
    assert_eq!((serial.0, parallel.0), (0, 0));
    let (mut a, mut b) = (Vec::new(), Vec::new());
    numbers(&serde_json::from_str(&serial.1).unwrap(), &mut a);
    numbers(&serde_json::from_str(&parallel.1).unwrap(), &mut b);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }
}
