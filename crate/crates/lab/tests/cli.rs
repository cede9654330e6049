use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_neass-lab")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const BASE: &str = r#"{
  "name": "probe",
  "seed": 1,
  "lattice": { "dim": 1, "side": 6, "geometry": "open" },
  "model": [
    { "term": "hopping", "range": 1, "amplitude": -1.0 },
    { "term": "staggered", "amplitude": 2.0 }
  ]
}"#;

#[test]
fn valid_gapped_chain_validates_and_prints_the_gap() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("gapped_chain.json");
    let o = run(&["model", "validate", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("gap 2.04"), "{stdout}");
    assert!(out.path().join("validate.csv").exists());
}

#[test]
fn complex_staggered_amplitude_is_rejected_with_its_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace(r#""amplitude": 2.0"#, r#""amplitude": [2.0, 0.5]"#);
    let p = write(dir.path(), "bad.json", &text);
    let o = run(&["model", "validate", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr.contains("model[1].amplitude"), "{stderr}");
}

#[test]
fn missing_and_unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write(dir.path(), "missing.json", &BASE.replace(r#""seed": 1,"#, ""));
    let o = run(&["model", "validate", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    let unknown = write(dir.path(), "unknown.json", &BASE.replace(r#""seed": 1,"#, r#""seed": 1, "colour": 3,"#));
    let o = run(&["model", "validate", unknown.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn gapless_chain_is_rejected_with_the_measured_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gapless_chain.json");
    let o = run(&["run", "invliou-check", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr.contains("spectral gap"), "{stderr}");
    assert!(!dir.path().join("invliou-check.csv").exists());
}

#[test]
fn failed_threshold_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("gapped_chain.json"))
        .unwrap()
        .replace(r#""threshold": 1e-8"#, r#""threshold": 0.0"#);
    let p = write(dir.path(), "strict.json", &text);
    let o = run(&["run", "invliou-check", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("invliou-check.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert!(report["leakage"].as_f64().unwrap() < 1e-4);
}

#[test]
fn repeated_runs_write_identical_tables() {
    let cfg = configs().join("gapped_chain.json");
    let bodies: Vec<String> = (0..2)
        .map(|k| {
            let dir = tempfile::tempdir().unwrap();
            let threads = if k == 0 { "1" } else { "2" };
            let o = run(&["run", "invliou-check", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--threads", threads]);
            assert_eq!(o.status.code(), Some(0));
            std::fs::read_to_string(dir.path().join("invliou-check.csv")).unwrap()
        })
        .collect();
    assert!(bodies[0].starts_with("# neass-lab "));
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn seed_override_changes_the_random_rows_and_the_hash() {
    let cfg = configs().join("gapped_chain.json");
    let read = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["run", "invliou-check", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read_to_string(dir.path().join("invliou-check.csv")).unwrap()
    };
    let (a, b) = (read("1"), read("2"));
    assert_ne!(a.lines().next(), b.lines().next());
    assert_ne!(a.lines().nth(2), b.lines().nth(2));
}
