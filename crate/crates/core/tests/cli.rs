use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_confident"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.ini");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

#[test]
fn dare_writes_synthesis_and_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["dare"], Some("[dare]\nsystem = matrix\nn = 1\na = 1\nb = 1\n"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/synthesis.txt")).unwrap();
    assert!(text.contains("1.618034"));
    let echoed = std::fs::read_to_string(dir.path().join("out/config.effective.ini")).unwrap();
    assert!(echoed.contains("system = matrix"));
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["dare"], Some("[dare]\nsytem = ev\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sytem"));
}

#[test]
fn malformed_value_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["sweep-theta"], Some("[sweep]\nruns = many\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unstabilizable_plant_exits_with_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["dare"], Some("[dare]\nsystem = matrix\nn = 1\na = 2\nb = 0\n"), dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_flag_overrides_config_and_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["adversarial", "--seed", "7"], Some("seed = 3\n[adversarial]\nhorizon = 20\n"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = std::fs::read_to_string(dir.path().join("out/config.effective.ini")).unwrap();
    assert!(echoed.contains("seed = 7"));
    assert!(dir.path().join("out/trajectories.csv").exists());
}
