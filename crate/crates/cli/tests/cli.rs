use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn seeker(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seeker")).args(args).env("SEEKER_LOG", "error").output().expect("binary runs")
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> String {
    scenarios_dir().join(name).display().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const LINEAR: &str = r#"
id = "line"
t_max = 8.0
dt = 0.01
r_init = [0.0, 0.0]

[field]
kind = "linear"
n = 1.0

[controller]
v_bar = 1.0
nu = 0.5
mu = 2.0
"#;

#[test]
fn escort_run_holds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = seeker(&["run", &scenario("escort.toml"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["metrics"]["holds_after_entry"], true);
    assert_eq!(v["passed"], true);
    for key in ["trajectory", "summary"] {
        assert!(Path::new(v["outputs"][key].as_str().unwrap()).exists());
    }
    let csv = fs::read_to_string(dir.path().join("escort.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,x,y,theta,d,d0,d_dot,sigma"));
    assert_eq!(csv.lines().count(), 100_002);
}

#[test]
fn tune_prints_a_passing_certificate() {
    let out = seeker(&["tune", &scenario("escort.toml")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["preset"], "escort");
    let lines = v["inequalities"].as_array().unwrap();
    assert!(lines.len() >= 6);
    assert!(lines.iter().all(|l| l["pass"] == true));
}

#[test]
fn tune_without_preset_is_a_config_error() {
    let out = seeker(&["tune", &scenario("spiral.toml")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_controller_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, LINEAR.replace("nu = 0.5", "nu = 0.0")).unwrap();
    let out = seeker(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nu") && err.contains("> 0"), "{err}");
}

#[test]
fn missing_file_and_bad_usage_exit_with_two() {
    assert_eq!(seeker(&["run", "/nonexistent/scenario.toml"]).status.code(), Some(2));
    assert_eq!(seeker(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(seeker(&["run"]).status.code(), Some(2));
}

#[test]
fn analyze_reproduces_the_run_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let run = seeker(&["run", &scenario("escort.toml"), "--out", d]);
    let csv = dir.path().join("escort.csv");
    let again = seeker(&["analyze", csv.to_str().unwrap(), "--scenario", &scenario("escort.toml")]);
    assert_eq!(again.status.code(), Some(0));
    let (a, b) = (json(&run), json(&again));
    assert_eq!(a["events"], b["events"]);
    assert_eq!(a["monitors"], b["monitors"]);
    assert_eq!(a["metrics"]["time_to_v_star"], b["metrics"]["time_to_v_star"]);
}

#[test]
fn overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("line.toml");
    fs::write(&path, LINEAR).unwrap();
    let out = seeker(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--dt", "0.005", "--t-max", "2"]);
    let v = json(&out);
    assert_eq!(v["dt"], 0.005);
    assert_eq!(v["metrics"]["samples"], 401);
}

#[test]
fn seed_selects_the_random_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
id = "rand"
t_max = 2.0
dt = 0.01
r_init = [0.5, 0.5]

[field]
kind = "random"
seed = 1
complexity = 3

[controller]
v_bar = 1.0
nu = 0.1
mu = 3.0
"#;
    let path = dir.path().join("rand.toml");
    fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let d = dir.path().to_str().unwrap();
    let a = json(&seeker(&["run", p, "--out", d, "--seed", "7"]));
    let b = json(&seeker(&["run", p, "--out", d, "--seed", "7"]));
    let c = json(&seeker(&["run", p, "--out", d, "--seed", "8"]));
    assert_eq!(a["metrics"], b["metrics"]);
    assert_ne!(a["metrics"]["final_position"], c["metrics"]["final_position"]);
}

#[test]
fn batch_matches_single_runs() {
    let src = tempfile::tempdir().unwrap();
    for name in ["spiral.toml", "linear_transient.toml"] {
        fs::copy(scenarios_dir().join(name), src.path().join(name)).unwrap();
    }
    fs::write(src.path().join("notes.txt"), "ignored").unwrap();
    let batch_out = tempfile::tempdir().unwrap();
    let single_out = tempfile::tempdir().unwrap();
    let out = seeker(&["batch", src.path().to_str().unwrap(), "--out", batch_out.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("pass")).count(), 2);
    for id in ["spiral", "linear_transient"] {
        seeker(&["run", src.path().join(format!("{id}.toml")).to_str().unwrap(), "--out", single_out.path().to_str().unwrap()]);
        let read = |d: &Path| fs::read(d.join(format!("{id}.csv"))).unwrap();
        assert_eq!(read(batch_out.path()), read(single_out.path()), "{id}");
    }
}

#[test]
fn batch_reports_config_errors() {
    let src = tempfile::tempdir().unwrap();
    fs::write(src.path().join("broken.toml"), "id = 3").unwrap();
    let out = seeker(&["batch", src.path().to_str().unwrap(), "--out", src.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
