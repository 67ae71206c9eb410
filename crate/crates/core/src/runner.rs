//! Tune, simulate, monitor and analyze a scenario, then write the trajectory
//! CSV and a JSON summary next to each other.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::linear::{analyze_linear, LinearReport};
use crate::par::{self, Execution};
use crate::scenario::{load_scenario, Overrides, Scenario, ScenarioError};
use crate::sim::{
    deviation_bound_check, detect_events, integrate, monitor_maintenance, reach_and_hold, DeviationReport, Event,
    MaintenanceReport, Sample, SimError, Trajectory,
};
use crate::field::ScalarField;
use crate::tuning::Certificate;
use crate::Vec2;

pub const CSV_HEADER: &str = "t,x,y,theta,d,d0,d_dot,sigma";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Scenario { path: String, source: ScenarioError },
    #[error(transparent)]
    ScenarioInline(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Csv { path: String, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    pub v_bar: f64,
    pub nu: f64,
    pub mu: f64,
    pub d_star: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub t_end: f64,
    pub final_position: [f64; 2],
    /// First entry into the maximizer vicinity.
    pub time_to_v_star: Option<f64>,
    /// No exit after the first entry, through the horizon.
    pub holds_after_entry: Option<bool>,
    /// Horizon as a multiple of the entry time.
    pub hold_horizon_ratio: Option<f64>,
    pub ddot_min_maintained: Option<f64>,
    pub ddot_max_maintained: Option<f64>,
    pub theta_total_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonitorReports {
    pub maintenance: Option<MaintenanceReport>,
    pub deviation: Option<DeviationReport>,
    pub reach_and_hold: Option<bool>,
    /// Why region monitors were skipped, if they were.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputPaths {
    pub trajectory: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub dt: f64,
    pub t_max: f64,
    pub controller: ControllerSummary,
    pub certificate: Option<Certificate>,
    pub metrics: Metrics,
    pub monitors: MonitorReports,
    pub linear: Option<LinearReport>,
    pub linear_error: Option<String>,
    pub events: Vec<Event>,
    /// Set when the run stopped early at a field singularity.
    pub error: Option<String>,
    pub outputs: OutputPaths,
    pub passed: bool,
}

impl RunSummary {
    /// Pass verdict recomputed from the individual flags.
    pub fn verdict(&self) -> bool {
        let m = &self.monitors;
        self.error.is_none()
            && self.linear_error.is_none()
            && self.certificate.as_ref().is_none_or(|c| c.passed() && c.inequalities.iter().all(|i| i.pass == i.holds()))
            && m.maintenance.as_ref().is_none_or(MaintenanceReport::passed)
            && m.deviation.as_ref().is_none_or(DeviationReport::passed)
            && m.reach_and_hold.is_none_or(|h| h)
            && self.linear.as_ref().is_none_or(LinearReport::passed)
    }
}

/// Monitors and analysis for a trajectory produced under `scenario`.
pub fn analyze(scenario: &Scenario, traj: &Trajectory, error: Option<String>) -> RunSummary {
    let c = &scenario.controller;
    let flags = scenario.monitors;
    let threshold = scenario.margins.map(|m| m.threshold());
    let events = detect_events(traj, &scenario.field, scenario.region.as_ref(), threshold);
    let mut monitors = MonitorReports::default();
    let mut metrics = Metrics {
        samples: traj.samples.len(),
        t_end: traj.final_sample().map_or(0.0, |s| s.t),
        final_position: traj.final_sample().map_or([f64::NAN; 2], |s| [s.r.x, s.r.y]),
        theta_total_variation: traj.theta_total_variation(),
        ..Metrics::default()
    };

    match (&scenario.region, &scenario.margins) {
        (Some(region), Some(margins)) => {
            if flags.maintenance {
                let rep = monitor_maintenance(traj, margins, region);
                metrics.ddot_min_maintained = rep.ddot_min;
                metrics.ddot_max_maintained = rep.ddot_max;
                monitors.maintenance = Some(rep);
            }
            if flags.deviation {
                monitors.deviation = Some(deviation_bound_check(traj, c, margins, region));
            }
        }
        (Some(_), None) => {
            monitors.skipped = Some("nu does not exceed the level drift, so no maintenance margin exists".into())
        }
        (None, _) => {}
    }
    if scenario.region.is_some() && scenario.field.maximizer(0.0).is_some() {
        let (entry, held) = reach_and_hold(&events);
        metrics.time_to_v_star = entry;
        metrics.holds_after_entry = held;
        metrics.hold_horizon_ratio = entry.filter(|&t| t > 0.0).map(|t| metrics.t_end / t);
        if flags.reach_and_hold {
            monitors.reach_and_hold = Some(held == Some(true));
        }
    }

    let (mut linear, mut linear_error) = (None, None);
    if let Some(f) = scenario.field.as_linear() {
        match analyze_linear(traj, c, f) {
            Ok(r) => linear = Some(r),
            Err(e) => linear_error = Some(e.to_string()),
        }
    }

    let mut summary = RunSummary {
        id: scenario.id.clone(),
        dt: scenario.dt,
        t_max: scenario.t_max,
        controller: ControllerSummary { v_bar: c.v_bar(), nu: c.nu(), mu: c.mu(), d_star: c.d_star() },
        certificate: scenario.tuned.as_ref().map(|t| t.certificate.clone()),
        metrics,
        monitors,
        linear,
        linear_error,
        events,
        error,
        outputs: OutputPaths::default(),
        passed: false,
    };
    summary.passed = summary.verdict();
    summary
}

/// Simulates and analyzes without touching the filesystem.
pub fn execute(scenario: &Scenario) -> (Trajectory, RunSummary) {
    let (traj, error) = match integrate(&scenario.field, &scenario.controller, scenario.r_init, scenario.t_max, scenario.dt) {
        Ok(t) => (t, None),
        Err(SimError::Singular { t, source, partial }) => {
            (*partial, Some(format!("field singularity at t = {t}: {source}")))
        }
        Err(e) => (Trajectory { dt: scenario.dt, ..Default::default() }, Some(e.to_string())),
    };
    let summary = analyze(scenario, &traj, error);
    let mut traj = traj;
    traj.events = summary.events.clone();
    (traj, summary)
}

/// Runs a scenario and writes `<id>.csv` and `<id>.summary.json` into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunSummary, RunError> {
    let (traj, mut summary) = execute(scenario);
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let csv = out_dir.join(format!("{}.csv", scenario.id));
    let json = out_dir.join(format!("{}.summary.json", scenario.id));
    write_csv(&traj, &csv)?;
    summary.outputs = OutputPaths { trajectory: Some(csv), summary: Some(json.clone()) };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&json, text.as_bytes())?;
    log::info!("{}: {} ({} samples)", summary.id, if summary.passed { "pass" } else { "FAIL" }, summary.metrics.samples);
    Ok(summary)
}

pub fn run(path: &Path, overrides: &Overrides, out_dir: &Path) -> Result<RunSummary, RunError> {
    let scenario = load_scenario(path, overrides, Execution::default())
        .map_err(|source| RunError::Scenario { path: path.display().to_string(), source })?;
    run_scenario(&scenario, out_dir)
}

/// Runs every `*.toml` in `dir`, scenario-parallel, in file-name order.
pub fn batch(dir: &Path, out_dir: &Path, exec: Execution) -> Result<Vec<(PathBuf, Result<RunSummary, RunError>)>, RunError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    let results = par::map(exec, &paths, |p| run(p, &Overrides::default(), out_dir));
    Ok(paths.into_iter().zip(results).collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| RunError::Io { path: path.display().to_string(), source: e.error })?;
    Ok(())
}

/// Full-precision CSV of the samples.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut w = csv::Writer::from_writer(Vec::with_capacity(200 * (traj.samples.len() + 1)));
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for s in &traj.samples {
        let row = [s.t, s.r.x, s.r.y, s.theta, s.d, s.d0, s.d_dot, s.sigma];
        w.write_record(row.iter().map(|v| format!("{v:.16e}"))).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_csv(traj: &Trajectory, path: &Path) -> Result<(), RunError> {
    write_atomic(path, trajectory_csv(traj).as_bytes())
}

pub fn read_csv(path: &Path) -> Result<Trajectory, RunError> {
    let csv_err = |line: u64, message: String| RunError::Csv { path: path.display().to_string(), line: line as usize, message };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_err(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(csv_err(1, format!("expected header `{CSV_HEADER}`")));
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let v: Vec<f64> = record
            .iter()
            .map(str::parse::<f64>)
            .collect::<Result<_, _>>()
            .map_err(|e| csv_err(line, e.to_string()))?;
        samples.push(Sample { t: v[0], r: Vec2::new(v[1], v[2]), theta: v[3], d: v[4], d0: v[5], d_dot: v[6], sigma: v[7] });
    }
    let dt = match samples.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => 0.0,
    };
    Ok(Trajectory { dt, samples, events: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    const LINEAR: &str = r#"
id = "lin"
t_max = 12.0
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

    fn scenario(text: &str) -> Scenario {
        Scenario::from_config(ScenarioConfig::from_toml(text).unwrap(), Execution::Sequential).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (traj, _) = execute(&scenario(LINEAR));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&traj, &p).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.samples, traj.samples);
        assert!(fs::read_to_string(&p).unwrap().starts_with("t,x,y,theta,d,d0,d_dot,sigma\n"));
    }

    #[test]
    fn linear_run_reports_convergence() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_scenario(&scenario(LINEAR), dir.path()).unwrap();
        assert!(s.passed, "{s:?}");
        assert!(s.outputs.trajectory.as_ref().unwrap().exists());
        assert!(s.outputs.summary.as_ref().unwrap().exists());
        match s.linear.unwrap() {
            LinearReport::Converging { monotone, total_variation, final_heading_error, .. } => {
                assert!(monotone && total_variation < std::f64::consts::TAU);
                assert!(final_heading_error < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn verdict_follows_flags() {
        let (_, mut s) = execute(&scenario(LINEAR));
        assert!(s.verdict());
        s.monitors.reach_and_hold = Some(false);
        assert!(!s.verdict());
        s.monitors.reach_and_hold = None;
        s.error = Some("boom".into());
        assert!(!s.verdict());
    }

    #[test]
    fn singular_run_keeps_partial_output() {
        let text = r#"
id = "hit"
t_max = 5.0
dt = 0.01
r_init = [1.0, 0.0]

[field]
kind = "radial"
path = "static(x=0, y=0)"

[controller]
v_bar = 1.0
nu = 1.0
mu = 1.0
d_star = -4.141592653589793
"#;
        // Heading locks at pi, straight into the apex of the cone at t = 1.
        let (traj, s) = execute(&scenario(text));
        assert!(!s.passed);
        assert!(s.error.as_deref().unwrap().contains("singularity"));
        assert!(!traj.samples.is_empty() && traj.samples.len() <= 101);
    }

    #[test]
    fn bad_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, format!("{CSV_HEADER}\n1,2,3\n")).unwrap();
        let msg = read_csv(&p).unwrap_err().to_string();
        assert!(msg.contains(":2:"), "{msg}");
    }
}
