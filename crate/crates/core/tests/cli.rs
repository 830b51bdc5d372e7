use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nls-scatter"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("toml") {
            let cfg = nls_scatter::config::RunConfig::load(&path).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.profile().unwrap();
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn smoke_run_writes_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate"], &configs().join("smoke.toml"), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let n = fs::read_dir(tmp.path().join("checkpoints")).unwrap().count();
    assert!(n >= 1);
    let diag = fs::read_to_string(tmp.path().join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().next(), Some("t,mass,sup_norm,Lu_l2,boundary_mass"));
    let o = bin().args(["gamma", "--out"]).arg(tmp.path()).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("packets.csv").is_file());
}

#[test]
fn malformed_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[simulation]\nepsilon = 0.1\ntime_step = 0.01\n").unwrap();
    let o = run(&["simulate"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("time_step"), "{msg}");
    assert!(msg.contains("line 3"), "{msg}");
    assert!(!tmp.path().join("checkpoints").exists());
}

#[test]
fn invalid_value_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[grid]\nn_points = 1000\n").unwrap();
    let o = run(&["simulate"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn gamma_on_empty_directory_lists_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().args(["gamma", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    let msg = stderr(&o);
    assert!(msg.contains("run.toml"), "{msg}");
    let o = bin().args(["verify", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn linear_run_verifies_dispersive_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("linear.toml");
    for cmd in ["simulate", "gamma", "verify"] {
        let o = run(&[cmd], &cfg, tmp.path());
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let text = fs::read_to_string(tmp.path().join("verdicts.jsonl")).unwrap();
    let sup: serde_json::Value = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|v| v["claim_id"] == "sup_decay")
        .expect("sup_decay verdict");
    assert_eq!(sup["pass"], true, "{sup}");
    let e = sup["exponent"].as_f64().unwrap();
    assert!((e + 0.5).abs() < 0.02, "{sup}");
    for key in ["claim_id", "target", "slack", "exponent", "r2", "pass"] {
        assert!(sup.get(key).is_some(), "{key} missing in {sup}");
    }
}
