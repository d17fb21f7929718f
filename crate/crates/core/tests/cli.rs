use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn spp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spp")).args(args).env("SOURCE_DATE_EPOCH", "0").output().expect("spawn spp")
}

fn run(sub: &str, cfg: &Path, out: &Path) -> Output {
    spp(&[sub, cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("case.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn missing_config_file_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("scan-dtilde", &dir.path().join("absent.cfg"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_required_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(config("case2.cfg")).unwrap().replace("k = 2.0\n", "");
    assert!(!body.contains("k = 2.0"));
    let out = run("scan-dtilde", &write_cfg(dir.path(), &body), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("case.k"));
}

#[test]
fn malformed_config_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("find-omega0", &write_cfg(dir.path(), "[case\nk = "), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_rejected() {
    assert_eq!(spp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn scan_outputs_are_listed_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("scan-dtilde", &config("case2.cfg"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["subcommand"], "scan-dtilde");
    let outputs: Vec<String> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    for name in ["dtilde_scan.csv", "scan_report.json"] {
        assert!(outputs.iter().any(|o| o.ends_with(name)), "{name} missing from {outputs:?}");
        assert!(dir.path().join(name).is_file());
    }
    let csv = std::fs::read_to_string(dir.path().join("dtilde_scan.csv")).unwrap();
    assert!(csv.starts_with("m,omega,re_dtilde,im_dtilde,decaying,admissible\n"));
    assert_eq!(csv.lines().count(), 1 + 2001);
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert_eq!(run("solve-linear", &config("case3.cfg"), dir.path()).status.code(), Some(0));
    }
    for name in ["linear.json", "phi0.csv", "phi0_star.csv", "potential.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn case1_scan_reports_no_admissible_width() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("scan-dtilde", &config("case1.cfg"), dir.path()).status.code(), Some(0));
    let report = json(&dir.path().join("scan_report.json"));
    assert_eq!(report["admissible_width_found"], false);
    assert_eq!(report["admissible_samples"], 0);
    assert_eq!(report["singular_samples"], 0);
}

#[test]
fn find_omega0_matches_known_value() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("find-omega0", &config("case3.cfg"), dir.path()).status.code(), Some(0));
    let v = json(&dir.path().join("omega0.json"));
    let w = v["omega0"].as_f64().unwrap();
    assert!((w - 2.8096).abs() < 5e-4, "omega0 {w}");
}

#[test]
fn validate_case3_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("validate", &config("case3.cfg"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("validate.json").is_file());
}

#[test]
fn floquet_scan_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("floquet-scan", &config("two_layer_periodic.cfg"), dir.path()).status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("floquet_scan.csv")).unwrap();
    assert!(csv.starts_with("omega,re_Rp,im_Rp,re_Rm,im_Rm,gap\n"));
}
