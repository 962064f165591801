use std::path::Path;
use std::process::{Command, Output};

use spde_control::harness::{Manifest, RunReport};

fn smc(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_smc"));
    cmd.args(args).env("RUST_LOG", "error").env_remove("SMC_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("smc runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn operators_suite_passes_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = smc(&["verify", "operators", "--out", &out], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: RunReport = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
    for n in ["contraction_excess_over_h", "space_mean_adjoint_identity", "green_identity", "dual_weight_closed_form"] {
        assert!(names.contains(&n), "{names:?}");
    }
    assert!(report.consistent() && report.passed());
    assert!(dir.path().join("timings.json").exists());
    let m = manifest(dir.path());
    assert_eq!(m.files[0].file, "report.json");
    assert_eq!(m.volatile, vec!["timings.json".to_string()]);
}

#[test]
fn negative_theta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"problem": {"model": {"theta": -1}}}"#);
    let o = smc(&["simulate", "--config", &cfg, "--out", &dir.path().display().to_string()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.theta"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"problem": {"modle": {}}}"#);
    let o = smc(&["simulate", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("modle"), "{}", stderr(&o));
}

#[test]
fn explicit_stepping_past_the_stability_limit_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"problem": {"time": {"scheme": "explicit"}}}"#);
    let o = smc(&["simulate", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("problem.time.n_steps"), "{}", stderr(&o));
}

#[test]
fn bad_worker_count_and_subcommand() {
    assert_eq!(smc(&["verify", "garding"], &[("SMC_WORKERS", "0")]).status.code(), Some(2));
    assert_eq!(smc(&["frobnicate"], &[]).status.code(), Some(2));
    assert_eq!(smc(&["verify", "nope"], &[]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run").display().to_string();
    let mut digests = Vec::new();
    for workers in ["1", "3"] {
        let o = smc(&["simulate", "--paths", "12", "--seed", "7", "--out", &out], &[("SMC_WORKERS", workers)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        digests.push(manifest(Path::new(&out)));
    }
    assert_eq!(digests[0], digests[1]);
    let files: Vec<&str> = digests[0].files.iter().map(|f| f.file.as_str()).collect();
    assert!(files.contains(&"mean.csv") && files.contains(&"terminal_seed_7.csv") && files.contains(&"terminal_seed_18.csv"), "{files:?}");
    let csv = std::fs::read_to_string(Path::new(&out).join("terminal_seed_7.csv")).unwrap();
    assert!(csv.starts_with("t,x,value\n"));
}

#[test]
fn failed_rate_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // a ladder far too short to resolve the rate
    let o = smc(&["rate", "--levels", "1,2,3,4", "--out", &dir.path().display().to_string()], &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let report: RunReport = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(!report.passed() && report.consistent());
}
