use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gpcollapse");

fn run(verb: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(BIN)
        .arg(verb)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const HARMONIC: &str = r#"
[grid]
L = 8.0
n = 64
[model]
a = 0.0
g = 0.0
[model.potential]
kind = "trap"
q = 2.0
"#;

#[test]
fn harmonic_trap_energy_is_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("minimize", HARMONIC, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = json(&dir.path().join("out/result.json"));
    let e = res["energy"]["total"].as_f64().unwrap();
    assert!((e - 2.0).abs() < 1e-6, "E = {e}");
    let bytes = fs::read(dir.path().join("out/field.bin")).unwrap();
    assert_eq!(bytes.len(), 16 + 8 * 64 * 64);
}

#[test]
fn deterministic_reruns_are_identical() {
    let cfg = r#"
[grid]
L = 4.0
n = 128
[model]
a_ratio = 0.5
g = 1.0
[model.potential]
kind = "singular"
points = [{ z = [0.0, 0.0], p = 0.5 }]
"#;
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    for d in [&first, &second] {
        let out = run("minimize", cfg, d.path(), &["--deterministic"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["result.json", "field.bin"] {
        let a = fs::read(first.path().join("out").join(name)).unwrap();
        let b = fs::read(second.path().join("out").join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn malformed_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["[grid]\nn = 100\n", "[grid]\nsize = 3\n", "[model]\na = 1.0\na_ratio = 0.5\n", "not toml ["] {
        let out = run("minimize", bad, dir.path(), &[]);
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
        assert!(!dir.path().join("out").exists());
    }
}

#[test]
fn spreading_without_binding_reports_nonconvergence() {
    let cfg = r#"
[grid]
L = 8.0
n = 32
[model]
a = 0.0
g = 0.0
[model.potential]
kind = "zero"
[solver]
max_iter = 200
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run("minimize", cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    let res = json(&dir.path().join("out/result.json"));
    assert_eq!(res["converged"], serde_json::Value::Bool(false));
}

#[test]
fn contact_strength_at_threshold_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("minimize", "[grid]\nL = 8.0\nn = 32\n[model]\na_ratio = 1.0\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("E(a) = -inf for all a >= a*"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn solve_q_reports_critical_strength() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("solve-q", "", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let c = json(&dir.path().join("out/q0_constants.json"));
    let a_star = c["a_star"].as_f64().unwrap();
    assert!((a_star - 11.700896524557).abs() < 1e-8, "a* = {a_star}");
    assert!(dir.path().join("out/q_profile.json").exists());
}

#[test]
fn predict_classifies_gravity_regime() {
    let cfg = r#"
[model]
a_ratios = [0.9, 0.99]
g_list = [0.1, 1.0]
[model.potential]
kind = "singular"
points = [{ z = [0.0, 0.0], p = 0.5 }]
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run("predict", cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let p = json(&dir.path().join("out/predictions.json"));
    let rows = p["predictions"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["gravity_regime"].is_string() && r["g_threshold"].is_number()));
}

#[test]
fn coarse_verify_skips_sweep_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("verify", "[grid]\nn = 64\n", dir.path(), &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.contains(" PASS:")).count(), 3);
    assert_eq!(stdout.lines().filter(|l| l.contains(" SKIP:")).count(), 7);
}
