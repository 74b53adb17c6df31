use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use csl_core::synthkit::read_snapshot;

const SMALL: &str = "[experiment]\nlambda = [8, 16, 32]\np = [6]\n";

fn csl(dir: &Path, config: Option<&str>, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_csl"));
    cmd.current_dir(dir).env_remove("CSL_MEMORY_CAP");
    if let Some(text) = config {
        fs::write(dir.join("run.toml"), text).unwrap();
        cmd.args(["--config", "run.toml"]);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn cone_verify_exits_zero_with_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = csl(dir.path(), None, &["--out", "run", "cone-verify"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    let cone = fs::read_to_string(run.join("cone.csv")).unwrap();
    assert!(cone.starts_with("tau,theta,xi_1,xi_2,xi_3,residual,closed_form_error\n"));
    assert_eq!(cone.lines().count(), 101);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest-cone-verify.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "cone-verify");
    assert_eq!(manifest["config"]["rho"], 0.25);
    assert_eq!(manifest["artifacts"], serde_json::json!(["cone.csv", "homogeneity.csv"]));
}

#[test]
fn sweep_with_two_lambdas_refuses() {
    let dir = tempfile::tempdir().unwrap();
    let o = csl(dir.path(), Some("[experiment]\nlambda = [8, 16]\n"), &["--out", "run", "sweep"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/error.json")).unwrap()).unwrap();
    assert_eq!(err["kind"], "configuration");
    assert!(err["message"].as_str().unwrap().contains("need ≥ 3"));
}

#[test]
fn invalid_config_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let o = csl(dir.path(), Some("[construction]\nrho = 1.5\nrhoo = 2\n"), &["--out", "run", "cone-verify"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/error.json")).unwrap()).unwrap();
    let details: Vec<&str> = err["details"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(details.len(), 2, "{details:?}");
    assert!(details.iter().any(|d| d.contains("did you mean `rho`")));
    assert!(details.iter().any(|d| d.contains("ρ ∈ (0,1)")));
}

#[test]
fn memory_cap_from_environment_rejects_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let o = csl(dir.path(), Some(SMALL), &["--out", "run", "sweep"], &[("CSL_MEMORY_CAP", "1MiB")]);
    assert_eq!(o.status.code(), Some(2));
    let err = fs::read_to_string(dir.path().join("run/error.json")).unwrap();
    assert!(err.contains("above the memory cap of 1048576 bytes"), "{err}");
    assert!(!dir.path().join("run/report.json").exists());
}

#[test]
fn strict_turns_warnings_into_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[experiment]\nlambda = [8, 12, 16]\n";
    let o = csl(dir.path(), Some(cfg), &["--out", "run", "--strict", "cone-verify"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = csl(dir.path(), Some(cfg), &["--out", "run", "cone-verify"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a power of two"));
}

#[test]
fn synthesize_writes_readable_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = csl(dir.path(), Some("[experiment]\nlambda = [8]\np = [4, 6]\n"), &["--out", "run", "synthesize"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let norms = fs::read_to_string(dir.path().join("run/norms.csv")).unwrap();
    assert!(norms.starts_with("lambda,pieces,side,dims,lattice_points,l2_norm,parseval_defect,norm_p4,norm_p6\n"));
    let file = fs::File::open(dir.path().join("run/field_lambda8.bin")).unwrap();
    let (field, lambda) = read_snapshot(std::io::BufReader::new(file)).unwrap();
    assert_eq!(lambda, 8.0);
    assert_eq!(field.grid().dimension(), 3);
}

#[test]
fn sweep_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let a = csl(dir.path(), Some(SMALL), &["--out", "a", "--jobs", "1", "sweep"], &[]);
    let b = csl(dir.path(), Some(SMALL), &["--out", "b", "--jobs", "3", "sweep"], &[]);
    // λ ≤ 32 keeps a single piece per cell, so some checks fail; the run itself succeeds
    assert_eq!(a.status.code(), Some(1));
    assert_eq!(b.status.code(), Some(1));
    for name in ["sweep.csv", "slopes.csv", "report.json", "checks.csv", "loglog.svg"] {
        let x = fs::read(dir.path().join("a").join(name)).unwrap();
        let y = fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(x == y, "{name} differs between job counts");
    }
    let r = csl(dir.path(), None, &["--out", "summary", "report", "a"], &[]);
    assert_eq!(r.status.code(), Some(1));
    let text = stdout(&r);
    assert!(text.contains("p = 6: quotient slope"), "{text}");
    assert!(text.contains("(expected -0.278 ± 0.08)"), "{text}");
    assert!(dir.path().join("summary/summary.txt").exists());
    let svg = fs::read_to_string(dir.path().join("a/loglog.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<circle") && svg.contains("log2 lambda"));
}

#[test]
fn report_on_missing_directory_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = csl(dir.path(), None, &["--out", "run", "report", "nowhere"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = fs::read_to_string(dir.path().join("run/error.json")).unwrap();
    assert!(err.contains("\"kind\": \"input\""));
}
