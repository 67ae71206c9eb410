//! Closed-form predictions for steady linear fields `D = n⟨r, n0⟩ + d0`.
//!
//! With `ν < v̄n` the heading obeys `θ̇ = μ v̄ n (cos(θ − φ) − cos θ⋆)` and
//! settles on a straight run at `φ + θ⋆`. With `ν > v̄n` it never settles: the
//! robot loops clockwise along a closed curve that drifts up the gradient.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::controller::ControllerParams;
use crate::field::{FieldSpec, LinearFieldParams};
use crate::geometry::{segments_cross, Segment};
use crate::quadrature::{integrate, QuadratureError};
use crate::sim::{integrate as simulate_path, SimError, Trajectory};
use crate::Vec2;

/// Absolute tolerance of the loop integrals.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// `|θ − θ₊|` below which the transient counts as over.
pub const TRANSIENT_DONE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinearError {
    #[error("ascent rate nu = {nu} exceeds the attainable v_bar * n = {cap}")]
    Infeasible { nu: f64, cap: f64 },
    #[error("spiral motion needs nu > v_bar * n, got nu = {nu}, v_bar * n = {cap}")]
    WrongRegime { nu: f64, cap: f64 },
    #[error("trajectory spans {periods:.2} estimated periods, need at least 3")]
    InsufficientSpan { periods: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn cap(params: &ControllerParams, field: &LinearFieldParams) -> f64 {
    params.v_bar() * field.n
}

/// `θ⋆ = arccos(ν / (v̄ n))`.
pub fn theta_star(nu: f64, v_bar: f64, n: f64) -> Result<f64, LinearError> {
    let c = v_bar * n;
    if !(nu > 0.0) || nu > c {
        return Err(LinearError::Infeasible { nu, cap: c });
    }
    Ok((nu / c).min(1.0).acos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Heading `φ + θ⋆`; attracting.
    Plus,
    /// Heading `φ − θ⋆`; repelling.
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Start locus for a straight run: the line `⟨r, n0⟩ = offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfectStart {
    pub k: i32,
    pub branch: Branch,
    pub theta_dagger: f64,
    /// Field level on the line.
    pub level: f64,
    pub normal: Vec2,
    pub offset: f64,
    /// The point of the line closest to the origin.
    pub point: Vec2,
}

/// Lines from which the robot runs straight at `φ ± θ⋆`. Neighbouring `k`
/// are `2π/(μn)` apart.
pub fn perfect_start_points(
    field: &LinearFieldParams,
    params: &ControllerParams,
    k_range: std::ops::RangeInclusive<i32>,
) -> Result<Vec<PerfectStart>, LinearError> {
    if params.nu() >= cap(params, field) {
        return Err(LinearError::Infeasible { nu: params.nu(), cap: cap(params, field) });
    }
    let ts = theta_star(params.nu(), params.v_bar(), field.n)?;
    let normal = field.direction();
    let mut out = Vec::new();
    for k in k_range {
        for branch in [Branch::Plus, Branch::Minus] {
            let theta_dagger = field.phi + branch.sign() * ts + TAU * k as f64;
            let level = params.d_star() + theta_dagger / params.mu();
            let offset = (level - field.d0) / field.n;
            out.push(PerfectStart { k, branch, theta_dagger, level, normal, offset, point: normal * offset });
        }
    }
    Ok(out)
}

/// Linearized decay rate `μ v̄ n sin θ⋆` at the attracting heading; zero at
/// the marginal rate `ν = v̄n`.
pub fn convergence_rate(params: &ControllerParams, field: &LinearFieldParams) -> Result<f64, LinearError> {
    let ts = theta_star(params.nu(), params.v_bar(), field.n)?;
    Ok(params.mu() * cap(params, field) * ts.sin())
}

/// Heading the closed loop settles on from `theta0`: the attracting root
/// `φ + θ⋆ + 2πk` between the repelling roots that bracket `theta0`.
pub fn limit_heading(params: &ControllerParams, field: &LinearFieldParams, theta0: f64) -> Result<f64, LinearError> {
    let ts = theta_star(params.nu(), params.v_bar(), field.n)?;
    let m = theta0 - field.phi + ts;
    let k = (m / TAU).floor();
    Ok(field.phi + ts + TAU * k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralDescriptor {
    /// Time for the heading to lose `2π`.
    pub period: f64,
    pub drift_speed: f64,
    pub loop_integral: f64,
    /// Upper bound on the heading rate; negative.
    pub theta_rate_bound: f64,
    /// `cos θ★ = v̄n/ν`.
    pub cos_theta: f64,
}

impl SpiralDescriptor {
    /// Closed form of the period, independent of the quadrature.
    pub fn period_closed_form(&self, params: &ControllerParams) -> f64 {
        TAU / (params.mu() * params.nu() * (1.0 - self.cos_theta * self.cos_theta).sqrt())
    }
}

pub fn spiral_descriptor(params: &ControllerParams, field: &LinearFieldParams) -> Result<SpiralDescriptor, LinearError> {
    let (mu, nu, v_bar) = (params.mu(), params.nu(), params.v_bar());
    let c = cap(params, field);
    if nu <= c {
        return Err(LinearError::WrongRegime { nu, cap: c });
    }
    let a = c / nu;
    let period = integrate(|t| 1.0 / (1.0 - a * t.cos()), -PI, PI, QUADRATURE_TOL)? / (mu * nu);
    let half = integrate(
        |t| {
            let ct = t.cos();
            a * ct * ct / ((1.0 - a * ct) * (1.0 + a * ct))
        },
        -0.5 * PI,
        0.5 * PI,
        QUADRATURE_TOL,
    )?;
    let loop_integral = 2.0 * half;
    Ok(SpiralDescriptor {
        period,
        drift_speed: v_bar * loop_integral / (mu * nu * period),
        loop_integral,
        theta_rate_bound: -mu * nu * (1.0 - a),
        cos_theta: a,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralFit {
    pub period_estimate: f64,
    pub period_rel_error: f64,
    pub drift_velocity: Vec2,
    pub drift_speed_rel_error: f64,
    /// Angle between the fitted drift and the gradient, in degrees.
    pub drift_angle_deg: f64,
    /// Largest one-period change of `r(t) − t w n0`, relative to the loop diameter.
    pub periodic_residual: f64,
    pub loop_diameter: f64,
    pub theta_rate_max: f64,
    pub theta_rate_negative: bool,
    pub loop_simple: bool,
}

impl SpiralFit {
    /// The tolerances used by the bundled spiral scenario.
    pub fn within_tolerances(&self) -> bool {
        self.period_rel_error < 0.01
            && self.drift_angle_deg < 1.0
            && self.periodic_residual < 0.01
            && self.theta_rate_negative
            && self.loop_simple
    }
}

/// Time at which the decreasing heading first reaches `level`.
fn descending_crossing(traj: &Trajectory, level: f64) -> Option<f64> {
    let s = &traj.samples;
    let j = s.partition_point(|x| x.theta >= level);
    if j == 0 || j >= s.len() {
        return None;
    }
    let (a, b) = (&s[j - 1], &s[j]);
    Some(a.t + (b.t - a.t) * (a.theta - level) / (a.theta - b.theta))
}

/// Fits the loop-plus-drift decomposition to a spiral-regime trajectory.
pub fn decompose_spiral(
    traj: &Trajectory,
    desc: &SpiralDescriptor,
    params: &ControllerParams,
    field: &LinearFieldParams,
) -> Result<SpiralFit, LinearError> {
    let s = &traj.samples;
    let (first, last) = match (s.first(), s.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(LinearError::InsufficientSpan { periods: 0.0 }),
    };
    let theta_rates: Vec<f64> = s.iter().map(|x| params.mu() * (x.d_dot - params.nu())).collect();
    let theta_rate_max = theta_rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let monotone = s.windows(2).all(|w| w[1].theta < w[0].theta);
    let span = (first.theta - last.theta) / TAU;
    if !monotone || span < 3.0 {
        return Err(LinearError::InsufficientSpan { periods: span.max(0.0) });
    }

    let stride = (s.len() / 2000).max(1);
    let gaps: Vec<f64> = s
        .iter()
        .step_by(stride)
        .filter_map(|x| descending_crossing(traj, x.theta - TAU).map(|t| t - x.t))
        .collect();
    let tau = gaps.iter().sum::<f64>() / gaps.len() as f64;

    let whole = ((last.t - first.t - tau) / tau).floor().max(1.0);
    let starts: Vec<f64> = s.iter().take_while(|x| x.t <= first.t + tau).step_by(stride).map(|x| x.t).collect();
    let mut drift = Vec2::zeros();
    for &t0 in &starts {
        let (a, b) = (traj.position_at(t0).unwrap(), traj.position_at(t0 + whole * tau).unwrap());
        drift += (b - a) / (whole * tau);
    }
    drift /= starts.len() as f64;

    let n0 = field.direction();
    let predicted = n0 * desc.drift_speed;
    let co_moving = |t: f64| traj.position_at(t).map(|r| r - predicted * t);

    let loop_pts: Vec<Vec2> = (0..=800).filter_map(|i| co_moving(first.t + tau * i as f64 / 800.0)).collect();
    let loop_diameter = loop_pts
        .iter()
        .flat_map(|p| loop_pts.iter().map(move |q| (p - q).norm()))
        .fold(0.0, f64::max);
    let mut residual: f64 = 0.0;
    for x in s.iter().step_by(stride) {
        if let (Some(p), Some(q)) = (co_moving(x.t), co_moving(x.t + tau)) {
            residual = residual.max((q - p).norm());
        }
    }

    // One loop in the co-moving frame; the closing gap is excluded.
    let segs: Vec<Segment> = loop_pts.windows(2).take(loop_pts.len().saturating_sub(2)).map(|w| (w[0], w[1])).collect();
    let mut loop_simple = true;
    'outer: for i in 0..segs.len() {
        for j in i + 2..segs.len() {
            if segments_cross(&segs[i], &segs[j]) {
                loop_simple = false;
                break 'outer;
            }
        }
    }

    let angle = drift.y.atan2(drift.x) - n0.y.atan2(n0.x);
    let angle = (angle + PI).rem_euclid(TAU) - PI;
    Ok(SpiralFit {
        period_estimate: tau,
        period_rel_error: (tau - desc.period).abs() / desc.period,
        drift_velocity: drift,
        drift_speed_rel_error: (drift.norm() - desc.drift_speed).abs() / desc.drift_speed,
        drift_angle_deg: angle.abs().to_degrees(),
        periodic_residual: residual / loop_diameter,
        loop_diameter,
        theta_rate_max,
        theta_rate_negative: theta_rate_max < 0.0,
        loop_simple,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRun {
    pub mu: f64,
    /// First time `|θ − θ₊| < ε`, if reached.
    pub time_to_neighborhood: Option<f64>,
    /// Largest distance from the start before that time.
    pub extent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuScalingReport {
    pub first: ScalingRun,
    pub second: ScalingRun,
    /// `μ1/μ2`, the predicted ratio of times and of extents.
    pub expected_ratio: f64,
    pub time_ratio: Option<f64>,
    pub extent_ratio: f64,
    /// Largest `|θ_{μ2}(t) − θ_{μ1}((μ2/μ1) t)|` over the second run.
    pub theta_mismatch: f64,
}

impl MuScalingReport {
    pub fn within(&self, rel: f64) -> bool {
        let ok = |r: f64| (r / self.expected_ratio - 1.0).abs() <= rel;
        self.time_ratio.is_some_and(ok) && ok(self.extent_ratio)
    }
}

fn scaling_run(traj: &Trajectory, mu: f64, target: f64, eps: f64) -> ScalingRun {
    let s = &traj.samples;
    let r0 = s[0].r;
    let mut time = None;
    for w in s.windows(2) {
        let (e0, e1) = ((w[0].theta - target).abs(), (w[1].theta - target).abs());
        if e0 < eps {
            time = Some(w[0].t);
            break;
        }
        if e1 < eps {
            // Crossings are located on the log scale, where the decay is linear.
            let u = (e0.ln() - eps.ln()) / (e0.ln() - e1.ln());
            time = Some(w[0].t + u * (w[1].t - w[0].t));
            break;
        }
    }
    let horizon = time.unwrap_or(f64::INFINITY);
    let extent = s.iter().take_while(|x| x.t <= horizon).map(|x| (x.r - r0).norm()).fold(0.0, f64::max);
    ScalingRun { mu, time_to_neighborhood: time, extent }
}

/// Runs the same start with gains `mu1` and `mu2`, keeping the initial
/// heading of `base`, and compares against the time-rescaling law.
/// `t_max` is the horizon of the `mu1` run; the other run is rescaled.
pub fn mu_scaling_check(
    field: &LinearFieldParams,
    base: &ControllerParams,
    r_init: Vec2,
    mu1: f64,
    mu2: f64,
    t_max: f64,
    dt: f64,
) -> Result<MuScalingReport, LinearError> {
    let spec = FieldSpec::Linear(*field);
    let d_init = field.value(r_init);
    let theta0 = base.heading(d_init, 0.0);
    let run = |mu: f64, horizon: f64| -> Result<(Trajectory, ControllerParams), LinearError> {
        let p = ControllerParams::new(base.v_bar(), base.nu(), mu, d_init - theta0 / mu)
            .map_err(|e| LinearError::Sim(SimError::Setup(e.to_string())))?;
        Ok((simulate_path(&spec, &p, r_init, horizon, dt)?, p))
    };
    let (t1, p1) = run(mu1, t_max)?;
    let (t2, _) = run(mu2, t_max * mu1 / mu2)?;
    let target = limit_heading(&p1, field, theta0)?;
    let first = scaling_run(&t1, mu1, target, TRANSIENT_DONE);
    let second = scaling_run(&t2, mu2, target, TRANSIENT_DONE);
    let ratio = mu2 / mu1;
    let theta_mismatch = t2
        .samples
        .iter()
        .filter_map(|x| t1.interpolate(ratio * x.t, |y| y.theta).map(|th| (th - x.theta).abs()))
        .fold(0.0, f64::max);
    Ok(MuScalingReport {
        first,
        second,
        expected_ratio: mu1 / mu2,
        time_ratio: first.time_to_neighborhood.zip(second.time_to_neighborhood).map(|(a, b)| b / a),
        extent_ratio: second.extent / first.extent,
        theta_mismatch,
    })
}

/// What a linear-field run looked like next to the predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum LinearReport {
    Converging {
        theta_star: f64,
        rate: f64,
        limit_heading: f64,
        final_heading_error: f64,
        monotone: bool,
        total_variation: f64,
    },
    Spiral {
        descriptor: SpiralDescriptor,
        fit: Option<SpiralFit>,
        fit_error: Option<String>,
    },
}

impl LinearReport {
    pub fn passed(&self) -> bool {
        match self {
            LinearReport::Converging { monotone, total_variation, .. } => *monotone && *total_variation < TAU,
            LinearReport::Spiral { fit, .. } => fit.as_ref().is_some_and(SpiralFit::within_tolerances),
        }
    }
}

/// True when the heading never reverses by more than `slack`.
pub fn heading_monotone(traj: &Trajectory, slack: f64) -> bool {
    let steps: Vec<f64> = traj.samples.windows(2).map(|w| w[1].theta - w[0].theta).collect();
    steps.iter().all(|&d| d >= -slack) || steps.iter().all(|&d| d <= slack)
}

pub fn analyze_linear(
    traj: &Trajectory,
    params: &ControllerParams,
    field: &LinearFieldParams,
) -> Result<LinearReport, LinearError> {
    if params.nu() > cap(params, field) {
        let descriptor = spiral_descriptor(params, field)?;
        let (fit, fit_error) = match decompose_spiral(traj, &descriptor, params, field) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        return Ok(LinearReport::Spiral { descriptor, fit, fit_error });
    }
    let ts = theta_star(params.nu(), params.v_bar(), field.n)?;
    let theta0 = traj.samples.first().map_or(0.0, |s| s.theta);
    let limit = limit_heading(params, field, theta0)?;
    Ok(LinearReport::Converging {
        theta_star: ts,
        rate: convergence_rate(params, field)?,
        limit_heading: limit,
        final_heading_error: traj.final_sample().map_or(f64::NAN, |s| (s.theta - limit).abs()),
        monotone: heading_monotone(traj, 1e-12),
        total_variation: traj.theta_total_variation(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn lin(n: f64, phi: f64) -> LinearFieldParams {
        LinearFieldParams::new(n, phi, 0.0).unwrap()
    }

    #[test]
    fn theta_star_examples() {
        assert!((theta_star(0.5, 1.0, 1.0).unwrap() - PI / 3.0).abs() < 1e-15);
        assert_eq!(theta_star(1.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((theta_star(1e-300, 1.0, 1.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(theta_star(1.5, 1.0, 1.0), Err(LinearError::Infeasible { .. })));
    }

    #[test]
    fn perfect_start_lines() {
        let p = ControllerParams::new(1.0, 0.5, 1.0, 0.0).unwrap();
        let pts = perfect_start_points(&lin(1.0, 0.0), &p, 0..=1).unwrap();
        let plus0 = pts.iter().find(|s| s.k == 0 && s.branch == Branch::Plus).unwrap();
        assert!((plus0.point - Vec2::new(PI / 3.0, 0.0)).norm() < 1e-15);
        let plus1 = pts.iter().find(|s| s.k == 1 && s.branch == Branch::Plus).unwrap();
        assert!((plus1.offset - plus0.offset - TAU).abs() < 1e-12);
        let p2 = p.with_mu(2.0).unwrap();
        let pts2 = perfect_start_points(&lin(1.0, 0.0), &p2, 0..=1).unwrap();
        assert!((pts2[2].offset - pts2[0].offset - PI).abs() < 1e-12);
    }

    #[test]
    fn rate_examples() {
        let p = ControllerParams::new(1.0, 0.5, 2.0, 0.0).unwrap();
        assert!((convergence_rate(&p, &lin(1.0, 0.3)).unwrap() - 3f64.sqrt()).abs() < 1e-14);
        let marginal = ControllerParams::new(1.0, 1.0, 2.0, 0.0).unwrap();
        assert_eq!(convergence_rate(&marginal, &lin(1.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn limit_heading_picks_attracting_root() {
        let p = ControllerParams::new(1.0, 0.5, 1.0, 0.0).unwrap();
        let f = lin(1.0, 0.0);
        let ts = PI / 3.0;
        assert!((limit_heading(&p, &f, 0.0).unwrap() - ts).abs() < 1e-15);
        assert!((limit_heading(&p, &f, -ts + 1e-9).unwrap() - ts).abs() < 1e-15);
        assert!((limit_heading(&p, &f, -ts - 1e-9).unwrap() - (ts - TAU)).abs() < 1e-12);
        assert!((limit_heading(&p, &f, 3.0).unwrap() - ts).abs() < 1e-15);
    }

    #[test]
    fn spiral_example_values() {
        let p = ControllerParams::new(1.0, 2.0, 1.0, 0.0).unwrap();
        let d = spiral_descriptor(&p, &lin(1.0, 0.0)).unwrap();
        assert!((d.period - 3.6276).abs() < 1e-4, "{}", d.period);
        assert!((d.period - d.period_closed_form(&p)).abs() < 1e-9);
        assert!((d.drift_speed - 0.268).abs() < 1e-3, "{}", d.drift_speed);
        assert!((d.theta_rate_bound + 1.0).abs() < 1e-15);
        let p2 = p.with_mu(2.0).unwrap();
        let d2 = spiral_descriptor(&p2, &lin(1.0, 0.0)).unwrap();
        assert!((d2.period - 0.5 * d.period).abs() < 1e-10);
        assert!((d2.drift_speed - d.drift_speed).abs() < 1e-10);
        assert!(spiral_descriptor(&ControllerParams::new(1.0, 0.5, 1.0, 0.0).unwrap(), &lin(1.0, 0.0)).is_err());
    }

    #[test]
    fn short_spiral_run_is_rejected() {
        let p = ControllerParams::new(1.0, 2.0, 1.0, 0.0).unwrap();
        let f = lin(1.0, 0.0);
        let d = spiral_descriptor(&p, &f).unwrap();
        let tr = simulate_path(&FieldSpec::Linear(f), &p, Vec2::zeros(), 2.0 * d.period, 1e-3).unwrap();
        assert!(matches!(decompose_spiral(&tr, &d, &p, &f), Err(LinearError::InsufficientSpan { .. })));
    }

    #[test]
    fn equal_gains_scale_trivially() {
        let f = lin(1.0, 0.4);
        let p = ControllerParams::new(1.0, 0.5, 1.5, -2.0).unwrap();
        let rep = mu_scaling_check(&f, &p, Vec2::new(0.3, -0.2), 1.5, 1.5, 20.0, 1e-2).unwrap();
        assert_eq!(rep.theta_mismatch, 0.0);
        assert_eq!(rep.time_ratio, Some(1.0));
        assert_eq!(rep.extent_ratio, 1.0);
    }
}
