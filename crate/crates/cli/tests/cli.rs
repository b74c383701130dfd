use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heavysaa"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn small_config(dir: &Path, trials: usize) -> PathBuf {
    let text = format!(
        r#"{{
  "schema_version": 1,
  "kind": "exterior-mr-coverage",
  "instance": "{}",
  "n_schedule": [200],
  "rho": 0.1,
  "eps": 0.05,
  "trials": {trials},
  "seed": 11,
  "output": "out"
}}"#,
        configs().join("instances/halfline.json").display()
    );
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 100);
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["trials.csv", "summary.csv", "manifest.json", "plotdata/exterior-mr-coverage.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("kind,N,trials"));
    let v = bin().arg("verify").arg(&out).output().unwrap();
    assert_eq!(code(&v), 0);

    let summary = out.join("summary.csv");
    let text = std::fs::read_to_string(&summary).unwrap();
    std::fs::write(&summary, text.replace(",100,", ",101,")).unwrap();
    let v = bin().arg("verify").arg(&out).output().unwrap();
    assert_eq!(code(&v), 3);
    assert!(String::from_utf8_lossy(&v.stderr).contains("summary.csv"));
}

#[test]
fn worker_count_does_not_change_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 100);
    let mut files = Vec::new();
    for w in [1, 3] {
        let out = dir.path().join(format!("w{w}"));
        let o = bin().args(["run", "--workers", &w.to_string(), "--output"]).arg(&out).arg(&cfg).output().unwrap();
        assert_eq!(code(&o), 0);
        files.push(std::fs::read(out.join("trials.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn invalid_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 0);
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("cfg.json:8: trials"), "{err}");

    std::fs::write(&cfg, "{ \"schema_version\": 1,\n  \"kind\": }").unwrap();
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cfg.json:2:"));
}

#[test]
fn sample_size_table_reports_binding_branch() {
    let o = bin()
        .args(["sample-size", "--q", "2", "--rho", "0.1", "--eps", "0.1,1e9", "--instance"])
        .arg(configs().join("instances/fixed_tilted.json"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].ends_with("binding"));
    assert!(lines[1].ends_with("variance"));
    assert!(lines[2].ends_with("moment"));
}

#[test]
fn bounds_subcommand() {
    let o = bin()
        .args(["bounds", "--family", "panchenko", "--generator", "pareto:4.5", "--replications", "300"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().skip(1).all(|l| l.starts_with("panchenko,pareto-4.5")));
    let o = bin().args(["bounds", "--generator", "cauchy:1"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            heavysaa::harness::ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        }
    }
}
