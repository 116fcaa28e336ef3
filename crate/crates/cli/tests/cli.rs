use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_stable-euler");

// zero drift on a coarse grid keeps a debug-build run around a second
const ZERO: &str = r#"
kind = "convergence"
seed = 7
[model]
alpha = 1.5
beta = 0.5
[drift]
name = "zero"
[scheme]
steps = [4, 8, 16, 32]
paths = 500
[reference]
dx = 0.04
half_width = 20.0
time_step = 0.015625
block_steps = 8
[output]
density = "both"
terminals = "both"
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stable_euler(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("STABLE_EULER_OUT");
    if let Some(dir) = out {
        cmd.env("STABLE_EULER_OUT", dir);
    }
    cmd.output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn version_and_catalog() {
    let v = stable_euler(&["version"], None);
    assert!(v.status.success());
    assert!(text(&v.stdout).starts_with("stable-euler "));
    let l = stable_euler(&["list-drifts"], None);
    assert!(l.status.success());
    let listing = text(&l.stdout);
    for name in ["zero", "constant", "capped-power", "sin-power", "square-wave"] {
        assert!(listing.contains(name), "{name} missing from\n{listing}");
    }
}

#[test]
fn validate_reports_the_bad_key() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), "good.toml", ZERO);
    let ok = stable_euler(&["validate", good.to_str().unwrap()], None);
    assert!(ok.status.success(), "{}", text(&ok.stderr));
    assert!(text(&ok.stdout).starts_with("ok: convergence"));

    let bad = write_config(tmp.path(), "bad.toml", &ZERO.replace("alpha = 1.5", "alpha = 2.5"));
    let out = stable_euler(&["validate", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("model.alpha"), "{}", text(&out.stderr));

    let typo = write_config(tmp.path(), "typo.toml", &ZERO.replace("paths = 500", "pathz = 500"));
    let out = stable_euler(&["validate", typo.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("pathz"));

    let missing = stable_euler(&["validate", "/nonexistent/config.toml"], None);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_to_env_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", ZERO);
    let out_dir = tmp.path().join("out");
    let out = stable_euler(&["run", cfg.to_str().unwrap()], Some(&out_dir));
    assert!(out.status.success(), "{}{}", text(&out.stdout), text(&out.stderr));
    assert!(text(&out.stdout).contains("PASS exact_scheme_error"));
    for f in [
        "manifest.toml",
        "results.csv",
        "plot.svg",
        "reference.bin",
        "reference.csv",
        "terminals_n4.bin",
        "terminals_n32.csv",
    ] {
        assert!(out_dir.join(f).is_file(), "{f} not written");
    }
    let manifest: toml::Table = fs::read_to_string(out_dir.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["passed"].as_bool(), Some(true));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("n,h,weighted_error"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn failed_checks_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let strict = ZERO.replace("[output]", "[checks]\ndegenerate_tol = 1e-15\n[output]");
    let cfg = write_config(tmp.path(), "strict.toml", &strict);
    let out = stable_euler(&["run", cfg.to_str().unwrap()], Some(&tmp.path().join("out")));
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("FAIL exact_scheme_error"));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", ZERO);
    let (a, b) = (tmp.path().join("w1"), tmp.path().join("w3"));
    assert!(stable_euler(&["--workers", "1", "run", cfg.to_str().unwrap()], Some(&a)).status.success());
    assert!(stable_euler(&["run", cfg.to_str().unwrap(), "--workers", "3"], Some(&b)).status.success());
    for f in ["results.csv", "plot.svg", "reference.bin", "terminals_n16.bin", "terminals_n16.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let zero_workers = stable_euler(&["--workers", "0", "version"], None);
    assert_eq!(zero_workers.status.code(), Some(2));
}
