//! Closed-loop simulation, event detection and runtime monitors.
//!
//! The only state is the position `r`; the heading is algebraic in the
//! measurement, so it cannot drift away from `μ (d − d0)`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::controller::{unit, ControllerParams};
use crate::field::{FieldError, ScalarField};
use crate::geometry::{FrenetFrame, DEFAULT_GRADIENT_FLOOR};
use crate::scenario::Scenario;
use crate::tuning::{RegionSpec, TuningMargins};
use crate::Vec2;

/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid integration setup: {0}")]
    Setup(String),
    #[error("trajectory hit a field singularity at t = {t}: {source}")]
    Singular {
        t: f64,
        source: FieldError,
        /// Samples recorded before the failure.
        partial: Box<Trajectory>,
    },
}

/// One recorded state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub r: Vec2,
    /// Unwrapped heading.
    pub theta: f64,
    /// Measured field value.
    pub d: f64,
    /// Reference value `ν t + d⋆`.
    pub d0: f64,
    /// Rate of the measurement along the motion.
    pub d_dot: f64,
    /// Tangential alignment `⟨T, e(θ)⟩`.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    VStarEntry,
    VStarExit,
    LevelCrossMinus,
    LevelCrossStar,
    LevelCrossPlus,
    DdotThresholdUp,
    DdotThresholdDown,
    SigmaSignChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    /// Sign of the indicator change (up means it became non-negative).
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn final_sample(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Linear interpolation of a sampled quantity at time `t`.
    pub fn interpolate(&self, t: f64, f: impl Fn(&Sample) -> f64) -> Option<f64> {
        let s = &self.samples;
        let (first, last) = (s.first()?, s.last()?);
        if t < first.t || t > last.t {
            return None;
        }
        let i = (((t - first.t) / self.dt).floor() as usize).min(s.len().saturating_sub(2));
        if s.len() == 1 {
            return Some(f(first));
        }
        let (a, b) = (&s[i], &s[i + 1]);
        let u = (t - a.t) / (b.t - a.t);
        Some(f(a) + (f(b) - f(a)) * u)
    }

    /// Interpolated position at time `t`.
    pub fn position_at(&self, t: f64) -> Option<Vec2> {
        Some(Vec2::new(self.interpolate(t, |s| s.r.x)?, self.interpolate(t, |s| s.r.y)?))
    }

    /// Total variation of the heading.
    pub fn theta_total_variation(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].theta - w[0].theta).abs()).sum()
    }
}

/// Records the analysis variables at `(t, r)` from the exact jet.
pub fn record(field: &dyn ScalarField, params: &ControllerParams, t: f64, r: Vec2) -> Result<Sample, FieldError> {
    let jet = field.jet(t, r)?;
    let theta = params.heading(jet.value, t);
    let e = unit(theta);
    let sigma = FrenetFrame::from_gradient(jet.grad, DEFAULT_GRADIENT_FLOOR).map_or(0.0, |f| f.tangent.dot(&e));
    Ok(Sample {
        t,
        r,
        theta,
        d: jet.value,
        d0: params.reference(t),
        d_dot: params.v_bar() * jet.grad.dot(&e) + jet.dt,
        sigma,
    })
}

fn rhs(field: &dyn ScalarField, params: &ControllerParams, t: f64, r: Vec2) -> Result<Vec2, FieldError> {
    Ok(params.velocity(params.heading(field.value(t, r)?, t)))
}

/// Fixed-step classical Runge–Kutta integration of `ṙ = v̄ e(μ(D(t, r) − ν t − d⋆))`.
/// The horizon is rounded to a whole number of steps.
pub fn integrate(
    field: &dyn ScalarField,
    params: &ControllerParams,
    r_init: Vec2,
    t_max: f64,
    dt: f64,
) -> Result<Trajectory, SimError> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(SimError::Setup(format!("need dt > 0 and t_max >= 0, got dt = {dt}, t_max = {t_max}")));
    }
    let steps = (t_max / dt).round() as usize;
    let mut traj = Trajectory { dt, samples: Vec::with_capacity(steps + 1), events: Vec::new() };
    let fail = |t: f64, source: FieldError, traj: Trajectory| SimError::Singular { t, source, partial: Box::new(traj) };

    let mut r = r_init;
    match record(field, params, 0.0, r) {
        Ok(s) => traj.samples.push(s),
        Err(e) => return Err(fail(0.0, e, traj)),
    }
    for i in 0..steps {
        let t = i as f64 * dt;
        let stage = || -> Result<Vec2, FieldError> {
            let k1 = rhs(field, params, t, r)?;
            let k2 = rhs(field, params, t + 0.5 * dt, r + k1 * (0.5 * dt))?;
            let k3 = rhs(field, params, t + 0.5 * dt, r + k2 * (0.5 * dt))?;
            let k4 = rhs(field, params, t + dt, r + k3 * dt)?;
            Ok(r + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
        };
        let t_next = (i + 1) as f64 * dt;
        match stage().and_then(|next| record(field, params, t_next, next).map(|s| (next, s))) {
            Ok((next, s)) => {
                r = next;
                traj.samples.push(s);
            }
            Err(e) => return Err(fail(t_next, e, traj)),
        }
    }
    Ok(traj)
}

/// Simulates a scenario; events are left empty (see [`detect_events`]).
pub fn simulate(scenario: &Scenario) -> Result<Trajectory, SimError> {
    integrate(&scenario.field, &scenario.controller, scenario.r_init, scenario.t_max, scenario.dt)
}

/// Sign changes of one indicator, located on the linear interpolant.
fn crossings(traj: &Trajectory, kind: EventKind, g: impl Fn(&Sample) -> f64, out: &mut Vec<Event>) {
    let mut prev: Option<(f64, f64)> = None;
    for s in &traj.samples {
        let v = g(s);
        if !v.is_finite() {
            prev = None;
            continue;
        }
        if let Some((t0, v0)) = prev {
            if (v0 >= 0.0) != (v >= 0.0) {
                let u = v0 / (v0 - v);
                let direction = if v >= 0.0 { Direction::Up } else { Direction::Down };
                out.push(Event { t: t0 + (s.t - t0) * u, kind, direction });
            }
        }
        prev = Some((s.t, v));
    }
}

/// Events of a trajectory: vicinity entry and exit (when the maximizer is
/// known), level crossings, threshold crossings of `ḋ`, and sign flips of `σ`.
pub fn detect_events(
    traj: &Trajectory,
    field: &dyn ScalarField,
    region: Option<&RegionSpec>,
    ddot_threshold: Option<f64>,
) -> Vec<Event> {
    let mut out = Vec::new();
    if let Some(region) = region {
        let radius = region.v_star_radius;
        // Outside-ness: non-negative means outside the vicinity.
        let outside = |s: &Sample| field.maximizer(s.t).map_or(f64::NAN, |c| (s.r - c).norm() - radius);
        if let Some(first) = traj.samples.first() {
            let g0 = outside(first);
            if g0 < 0.0 {
                out.push(Event { t: first.t, kind: EventKind::VStarEntry, direction: Direction::Down });
            }
        }
        let mut raw = Vec::new();
        // The vicinity is closed, so a value of exactly zero counts as inside.
        crossings(traj, EventKind::VStarExit, |s| outside(s) - f64::MIN_POSITIVE, &mut raw);
        out.extend(raw.into_iter().map(|e| Event {
            kind: if e.direction == Direction::Down { EventKind::VStarEntry } else { EventKind::VStarExit },
            ..e
        }));
        let levels = [
            (EventKind::LevelCrossMinus, region.gamma_minus),
            (EventKind::LevelCrossStar, region.gamma_star),
            (EventKind::LevelCrossPlus, region.gamma_plus),
        ];
        for (kind, level) in levels {
            crossings(traj, kind, |s| s.d - level.value(s.t), &mut out);
        }
    }
    if let Some(thr) = ddot_threshold {
        let mut raw = Vec::new();
        crossings(traj, EventKind::DdotThresholdUp, |s| s.d_dot - thr, &mut raw);
        out.extend(raw.into_iter().map(|e| Event {
            kind: if e.direction == Direction::Up { EventKind::DdotThresholdUp } else { EventKind::DdotThresholdDown },
            ..e
        }));
    }
    crossings(traj, EventKind::SigmaSignChange, |s| s.sigma, &mut out);
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out
}

/// Time of the first vicinity entry, and whether no exit follows it.
pub fn reach_and_hold(events: &[Event]) -> (Option<f64>, Option<bool>) {
    let entry = events.iter().find(|e| e.kind == EventKind::VStarEntry).map(|e| e.t);
    let held = entry.map(|t0| !events.iter().any(|e| e.kind == EventKind::VStarExit && e.t > t0));
    (entry, held)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    /// The measurement reached the upper level, as predicted.
    ReachedUpper,
    /// A maintained inequality broke first.
    Broken,
    /// The horizon ended inside the episode.
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub start: f64,
    pub end: f64,
    pub outcome: EpisodeEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `ḋ` fell below `ν − δ` before the upper level was reached.
    DdotDrop,
    /// `σ` turned positive while `ḋ ≥ ν − δ` was being maintained.
    SigmaFlip,
    /// The measurement left the regular zone from below.
    LeftZone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub kind: ViolationKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MaintenanceReport {
    pub episodes: Vec<Episode>,
    pub violations: Vec<Violation>,
    /// Extremes of `ḋ` over all maintained samples.
    pub ddot_min: Option<f64>,
    pub ddot_max: Option<f64>,
}

impl MaintenanceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Once `ḋ ≥ ν − δ` with `σ ≤ 0` inside the regular zone, both must persist
/// until the measurement reaches `γ+`. Every break is reported.
pub fn monitor_maintenance(traj: &Trajectory, margins: &TuningMargins, region: &RegionSpec) -> MaintenanceReport {
    let thr = margins.threshold();
    let ddot_tol = 1e-9 * thr.abs().max(1.0);
    let sigma_tol = 1e-9;
    let mut report = MaintenanceReport::default();
    let mut active: Option<f64> = None;
    let mut extremes = (f64::INFINITY, f64::NEG_INFINITY);
    let mut prev_slot: Option<&Sample> = None;
    for s in &traj.samples {
        let prev = prev_slot.replace(s);
        let (lo, hi) = (region.gamma_minus.value(s.t), region.gamma_plus.value(s.t));
        match active {
            None => {
                if s.d >= lo && s.d < hi && s.d_dot >= thr && s.sigma <= 0.0 {
                    // Place the start at the interpolated crossing of whichever
                    // entry condition was satisfied last.
                    let alpha = prev.map_or(1.0, |p| {
                        let frac = |a: f64, b: f64, level: f64| if a < level { (level - a) / (b - a) } else { 0.0 };
                        let lo_prev = region.gamma_minus.value(p.t);
                        frac(p.d - lo_prev, s.d - lo, 0.0)
                            .max(frac(p.d_dot, s.d_dot, thr))
                            .max(frac(-p.sigma, -s.sigma, 0.0))
                            .clamp(0.0, 1.0)
                    });
                    let (t0, ddot0) = match prev {
                        Some(p) => (p.t + alpha * (s.t - p.t), p.d_dot + alpha * (s.d_dot - p.d_dot)),
                        None => (s.t, s.d_dot),
                    };
                    active = Some(t0);
                    extremes = (extremes.0.min(ddot0).min(s.d_dot), extremes.1.max(ddot0).max(s.d_dot));
                }
            }
            Some(start) => {
                let broken = if s.d >= hi {
                    let end = prev.map_or(s.t, |p| {
                        let (a, b) = (p.d - region.gamma_plus.value(p.t), s.d - hi);
                        if a < 0.0 { p.t + (s.t - p.t) * (-a / (b - a)) } else { s.t }
                    });
                    report.episodes.push(Episode { start, end, outcome: EpisodeEnd::ReachedUpper });
                    active = None;
                    continue;
                } else if s.d_dot < thr - ddot_tol {
                    Some((ViolationKind::DdotDrop, s.d_dot))
                } else if s.sigma > sigma_tol {
                    Some((ViolationKind::SigmaFlip, s.sigma))
                } else if s.d < lo {
                    Some((ViolationKind::LeftZone, s.d))
                } else {
                    None
                };
                match broken {
                    Some((kind, value)) => {
                        report.violations.push(Violation { t: s.t, kind, value });
                        report.episodes.push(Episode { start, end: s.t, outcome: EpisodeEnd::Broken });
                        active = None;
                    }
                    None => extremes = (extremes.0.min(s.d_dot), extremes.1.max(s.d_dot)),
                }
            }
        }
    }
    if let (Some(start), Some(last)) = (active, traj.samples.last()) {
        report.episodes.push(Episode { start, end: last.t, outcome: EpisodeEnd::Horizon });
    }
    if extremes.0.is_finite() {
        report.ddot_min = Some(extremes.0);
        report.ddot_max = Some(extremes.1);
    }
    report
}

/// Largest distance a robot at speed `v̄` can cover while its heading turns
/// clockwise by `φ` at a rate of at least `μδ`: a full `2v̄/(μδ)` per complete
/// turn plus the chord `2 (v̄/(μδ)) sin(ψ/2)` of the remaining arc `ψ ≤ π`.
pub fn deviation_bound(phi: f64, v_bar: f64, mu: f64, delta: f64) -> f64 {
    let radius = v_bar / (mu * delta);
    let phi = phi.abs();
    let turns = (phi / TAU).floor();
    let rest = (phi - turns * TAU).min(PI);
    2.0 * radius * turns + 2.0 * radius * (0.5 * rest).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationViolation {
    pub t0: f64,
    pub t: f64,
    pub distance: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviationReport {
    pub intervals: usize,
    pub violations: Vec<DeviationViolation>,
    /// Samples whose heading turned slower than `μδ`.
    pub rate_violations: usize,
    /// Largest `distance / bound` seen (0 when no interval occurred).
    pub worst_ratio: f64,
}

impl DeviationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.rate_violations == 0
    }
}

/// Over every maximal run of samples with `ḋ ≤ ν − δ` inside the regular
/// zone, checks the displacement against [`deviation_bound`] and the turning
/// rate against `−μδ`.
pub fn deviation_bound_check(
    traj: &Trajectory,
    params: &ControllerParams,
    margins: &TuningMargins,
    region: &RegionSpec,
) -> DeviationReport {
    let thr = margins.threshold();
    let (mu, v_bar, nu, delta) = (params.mu(), params.v_bar(), params.nu(), margins.delta);
    let rate_tol = 1e-9 * mu * nu.max(1.0);
    let mut report = DeviationReport::default();
    let mut anchor: Option<&Sample> = None;
    for s in &traj.samples {
        let inside = region.contains(s.t, s.d) && s.d_dot <= thr;
        if !inside {
            anchor = None;
            continue;
        }
        let a = *anchor.get_or_insert_with(|| {
            report.intervals += 1;
            s
        });
        if mu * (s.d_dot - nu) > -mu * delta + rate_tol {
            report.rate_violations += 1;
        }
        let distance = (s.r - a.r).norm();
        let bound = deviation_bound(s.theta - a.theta, v_bar, mu, delta);
        if bound > 0.0 {
            report.worst_ratio = report.worst_ratio.max(distance / bound);
        }
        if distance > bound * (1.0 + 1e-6) + 1e-12 {
            report.violations.push(DeviationViolation { t0: a.t, t: s.t, distance, bound });
        }
    }
    report
}
