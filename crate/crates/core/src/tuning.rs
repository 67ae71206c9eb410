//! Controller tuning: field bounds over the regular zone, feasibility of the
//! requested ascent rate, lower bounds on the gain, and closed-form presets
//! for radial fields.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogCall, CatalogError};
use crate::field::{FieldError, RadialProfile, ScalarField};
use crate::geometry::{characteristics_at, time_samples, GeometryError, IsolineCharacteristics};
use crate::par::{self, Execution};
use crate::Vec2;

/// Inflation applied to sampled suprema (and deflation of the density infimum).
pub const DEFAULT_SAFETY: f64 = 1.1;
/// Gain multiplier over the strongest lower bound.
pub const MU_HEADROOM: f64 = 1.05;
/// Share of `ν − γ̄` used as the maintenance margin `δ`.
pub const DELTA_FRACTION: f64 = 0.95;
/// "Much greater than" is realised as `lhs ≥ rhs + STRICT_MARGIN · lhs`.
pub const STRICT_MARGIN: f64 = 0.01;
/// Upper end of the brute-force scan over the sweep index `k`.
pub const K_SCAN_MAX: u32 = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TuningError {
    #[error("no grid point falls inside the regular zone")]
    EmptyRegion,
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("level spacing fails at t = {t}: need gamma_minus + delta_gamma <= gamma_star <= gamma_plus - delta_gamma")]
    LevelSpacing { t: f64 },
    #[error("vicinity condition fails at t = {t}, r = ({x}, {y}): D >= gamma_star there but the point is farther than {radius} from the maximizer")]
    Vicinity { t: f64, x: f64, y: f64, radius: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Time-dependent level `γ(t)` chosen from a small catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelFunction {
    Constant { value: f64 },
    Linear { value: f64, rate: f64 },
    Sine { mean: f64, amplitude: f64, omega: f64 },
}

impl LevelFunction {
    pub fn constant(value: f64) -> Self {
        LevelFunction::Constant { value }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            LevelFunction::Constant { value } => value,
            LevelFunction::Linear { value, rate } => value + rate * t,
            LevelFunction::Sine { mean, amplitude, omega } => mean + amplitude * (omega * t).sin(),
        }
    }

    /// Rate of change by central differences.
    pub fn rate(&self, t: f64) -> f64 {
        const H: f64 = 1e-4;
        (self.value(t + H) - self.value(t - H)) / (2.0 * H)
    }
}

impl fmt::Display for LevelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LevelFunction::Constant { value } => write!(f, "constant(value={value:?})"),
            LevelFunction::Linear { value, rate } => write!(f, "linear(value={value:?}, rate={rate:?})"),
            LevelFunction::Sine { mean, amplitude, omega } => {
                write!(f, "sine(mean={mean:?}, amplitude={amplitude:?}, omega={omega:?})")
            }
        }
    }
}

impl FromStr for LevelFunction {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let call = CatalogCall::parse(s)?;
        Ok(match call.name.as_str() {
            "constant" => {
                call.expect_only(&["value"])?;
                LevelFunction::Constant { value: call.require("value")? }
            }
            "linear" => {
                call.expect_only(&["value", "rate"])?;
                LevelFunction::Linear { value: call.require("value")?, rate: call.get_or("rate", 0.0) }
            }
            "sine" => {
                call.expect_only(&["mean", "amplitude", "omega"])?;
                LevelFunction::Sine {
                    mean: call.require("mean")?,
                    amplitude: call.get_or("amplitude", 0.0),
                    omega: call.get_or("omega", 0.0),
                }
            }
            other => return Err(CatalogError::UnknownName(other.to_string())),
        })
    }
}

/// The regular zone between `γ−` and `γ+`, the target level `γ⋆`, and the
/// radius of the maximizer vicinity that `γ⋆` is meant to certify.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSpec {
    pub gamma_minus: LevelFunction,
    pub gamma_star: LevelFunction,
    pub gamma_plus: LevelFunction,
    pub delta_gamma: f64,
    pub v_star_radius: f64,
}

impl RegionSpec {
    pub fn new(
        gamma_minus: LevelFunction,
        gamma_star: LevelFunction,
        gamma_plus: LevelFunction,
        delta_gamma: f64,
        v_star_radius: f64,
    ) -> Result<Self, TuningError> {
        if !(delta_gamma > 0.0 && delta_gamma.is_finite()) {
            return Err(TuningError::Hypothesis(format!("delta_gamma must be > 0, got {delta_gamma}")));
        }
        if !(v_star_radius > 0.0 && v_star_radius.is_finite()) {
            return Err(TuningError::Hypothesis(format!("v_star_radius must be > 0, got {v_star_radius}")));
        }
        Ok(Self { gamma_minus, gamma_star, gamma_plus, delta_gamma, v_star_radius })
    }

    /// Membership of the level `d` in the regular zone at time `t`.
    pub fn contains(&self, t: f64, d: f64) -> bool {
        self.gamma_minus.value(t) <= d && d <= self.gamma_plus.value(t)
    }

    pub fn levels(&self) -> [LevelFunction; 3] {
        [self.gamma_minus, self.gamma_star, self.gamma_plus]
    }

    /// Level spacing `γ− + Δγ ≤ γ⋆ ≤ γ+ − Δγ` on the given times.
    pub fn check_level_spacing(&self, times: &[f64]) -> Result<(), TuningError> {
        const TOL: f64 = 1e-12;
        for &t in times {
            let (lo, mid, hi) = (self.gamma_minus.value(t), self.gamma_star.value(t), self.gamma_plus.value(t));
            if lo + self.delta_gamma > mid + TOL || mid > hi - self.delta_gamma + TOL {
                return Err(TuningError::LevelSpacing { t });
            }
        }
        Ok(())
    }

    /// Start condition `D(0, r_in) ≥ γ−(0) + Δγ/2`.
    pub fn start_condition_holds(&self, d_init: f64) -> bool {
        d_init >= self.gamma_minus.value(0.0) + 0.5 * self.delta_gamma
    }

    /// Largest level rate `sup |γ̇_i|` over `[0, horizon]`.
    pub fn level_rate_sup(&self, horizon: f64, samples: usize) -> f64 {
        time_samples(0.0, horizon, samples.max(2))
            .into_iter()
            .flat_map(|t| self.levels().map(|g| g.rate(t).abs()))
            .fold(0.0, f64::max)
    }
}

/// Where the sampling lattice is centered.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GridAnchor {
    /// Follow the field's maximizer, or the origin when it is unknown.
    #[default]
    Maximizer,
    Fixed(Vec2),
}

/// Space-time lattice used for bound estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub half_width: f64,
    pub n_space: usize,
    pub n_time: usize,
    pub t_horizon: f64,
    pub anchor: GridAnchor,
}

impl SampleGrid {
    /// Halves the lattice spacing in space and time, keeping all old nodes.
    pub fn doubled(&self) -> Self {
        Self { n_space: 2 * self.n_space - 1, n_time: 2 * self.n_time.max(1) - 1, ..*self }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_space - 1) as f64
    }

    fn center(&self, field: &dyn ScalarField, t: f64) -> Vec2 {
        match self.anchor {
            GridAnchor::Maximizer => field.maximizer(t).unwrap_or_else(Vec2::zeros),
            GridAnchor::Fixed(p) => p,
        }
    }

    fn nodes(&self, field: &dyn ScalarField) -> Vec<(f64, Vec2)> {
        let offsets: Vec<Vec2> = (0..self.n_space)
            .flat_map(|j| {
                (0..self.n_space).map(move |i| {
                    let s = |k: usize| -self.half_width + 2.0 * self.half_width * k as f64 / (self.n_space - 1) as f64;
                    Vec2::new(s(i), s(j))
                })
            })
            .collect();
        time_samples(0.0, self.t_horizon, self.n_time)
            .into_iter()
            .flat_map(|t| {
                let c = self.center(field, t);
                offsets.iter().map(move |o| (t, c + o)).collect::<Vec<_>>()
            })
            .collect()
    }

    fn validate(&self) -> Result<(), TuningError> {
        if self.n_space < 2 || self.n_time < 1 || !(self.half_width > 0.0) || !(self.t_horizon >= 0.0) {
            return Err(TuningError::Hypothesis(
                "grid needs n_space >= 2, n_time >= 1, half_width > 0 and t_horizon >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSample {
    pub t: f64,
    pub r: Vec2,
    pub value: f64,
    pub ch: IsolineCharacteristics,
}

/// Characteristics at every lattice node inside the regular zone.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSamples {
    pub samples: Vec<RegionSample>,
    pub grid: SampleGrid,
}

/// Samples the regular zone. Point singularities outside the zone are skipped;
/// a critical point inside it is an error.
pub fn sample_region(
    field: &dyn ScalarField,
    region: &RegionSpec,
    grid: &SampleGrid,
    exec: Execution,
) -> Result<RegionSamples, TuningError> {
    grid.validate()?;
    let nodes = grid.nodes(field);
    let results = par::map(exec, &nodes, |&(t, r)| -> Result<Option<RegionSample>, TuningError> {
        let value = match field.value(t, r) {
            Ok(v) => v,
            Err(FieldError::Singular { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        if !region.contains(t, value) {
            return Ok(None);
        }
        let ch = characteristics_at(field, t, r)?;
        Ok(Some(RegionSample { t, r, value, ch }))
    });
    let mut samples = Vec::new();
    for r in results {
        if let Some(s) = r? {
            samples.push(s);
        }
    }
    if samples.is_empty() {
        return Err(TuningError::EmptyRegion);
    }
    Ok(RegionSamples { samples, grid: *grid })
}

/// Checks on the lattice that `D ≥ γ⋆` only happens within `R⋆` of the maximizer.
pub fn check_vicinity(field: &dyn ScalarField, region: &RegionSpec, grid: &SampleGrid, exec: Execution) -> Result<(), TuningError> {
    grid.validate()?;
    let nodes = grid.nodes(field);
    let bad = par::map(exec, &nodes, |&(t, r)| {
        let centre = field.maximizer(t)?;
        let v = field.value(t, r).ok()?;
        (v >= region.gamma_star.value(t) && (r - centre).norm() > region.v_star_radius).then_some((t, r))
    });
    match bad.into_iter().flatten().next() {
        Some((t, r)) => Err(TuningError::Vicinity { t, x: r.x, y: r.y, radius: region.v_star_radius }),
        None => Ok(()),
    }
}

/// Suprema of the isoline characteristics over the regular zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    pub b_rho: f64,
    pub b_lambda: f64,
    pub b_omega: f64,
    pub b_omega_grad: f64,
    pub b_kappa: f64,
    pub b_v: f64,
    pub b_alpha: f64,
    pub b_tau: f64,
    pub b_n: f64,
    pub gamma_bar: f64,
    pub gamma_plus_sup: f64,
    /// Infimum of the density, deflated by the safety factor.
    pub delta_grad: f64,
    pub safety: f64,
}

impl FieldBounds {
    pub fn from_samples(samples: &RegionSamples, region: &RegionSpec, safety: f64) -> Self {
        let sup = |f: fn(&IsolineCharacteristics) -> f64| {
            samples.samples.iter().map(|s| f(&s.ch).abs()).fold(0.0, f64::max) * safety
        };
        let rho_inf = samples.samples.iter().map(|s| s.ch.rho).fold(f64::INFINITY, f64::min);
        let grid = &samples.grid;
        let gamma_plus_sup = time_samples(0.0, grid.t_horizon, 4 * grid.n_time + 1)
            .into_iter()
            .map(|t| region.gamma_plus.value(t))
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            b_rho: sup(|c| c.rho),
            b_lambda: sup(|c| c.lambda),
            b_omega: sup(|c| c.omega),
            b_omega_grad: sup(|c| c.omega_grad),
            b_kappa: sup(|c| c.kappa),
            b_v: sup(|c| c.v_rho),
            b_alpha: sup(|c| c.alpha),
            b_tau: sup(|c| c.tau_rho),
            b_n: sup(|c| c.n_rho),
            gamma_bar: region.level_rate_sup(grid.t_horizon, 4 * grid.n_time + 1) * safety,
            gamma_plus_sup,
            delta_grad: rho_inf / safety,
            safety,
        }
    }
}

/// Samples the zone and reduces to bounds with the default safety factor.
pub fn estimate_bounds(
    field: &dyn ScalarField,
    region: &RegionSpec,
    grid: &SampleGrid,
    exec: Execution,
) -> Result<FieldBounds, TuningError> {
    let samples = sample_region(field, region, grid, exec)?;
    Ok(FieldBounds::from_samples(&samples, region, DEFAULT_SAFETY))
}

/// Relation tested by a certificate line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = ">=")]
    GreaterEq,
}

/// One checked inequality `lhs (> | >=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl Inequality {
    pub fn new(name: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let mut q = Self { name: name.into(), lhs, relation, rhs, margin: lhs - rhs, pass: false };
        q.pass = q.holds();
        q
    }

    /// Recomputes the verdict from the two sides.
    pub fn holds(&self) -> bool {
        match self.relation {
            Relation::Greater => self.lhs > self.rhs,
            Relation::GreaterEq => self.lhs >= self.rhs,
        }
    }
}

/// Tuned parameters with the inequalities that justify them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub preset: String,
    pub nu: f64,
    pub mu: f64,
    pub inequalities: Vec<Inequality>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.inequalities.iter().all(|q| q.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Inequality> {
        self.inequalities.iter().find(|q| q.name == name)
    }
}

/// Outcome of the ascent-rate feasibility test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuCheck {
    pub pass: bool,
    /// `v̄ − ε − sup(|λ| + ν/ρ)`; negative when the speed test fails.
    pub margin: f64,
    pub v_bar: f64,
    pub speed_demand: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub gamma_bar: f64,
}

impl NuCheck {
    pub fn inequalities(&self) -> Vec<Inequality> {
        vec![
            Inequality::new("speed covers front motion plus ascent", self.v_bar - self.epsilon, Relation::GreaterEq, self.speed_demand),
            Inequality::new("nu exceeds level drift", self.nu, Relation::Greater, self.gamma_bar),
        ]
    }
}

/// `v̄ ⪢ |λ| + ν/ρ` over the zone and `ν > γ̄`.
pub fn check_nu(bounds: &FieldBounds, samples: &RegionSamples, v_bar: f64, nu: f64) -> NuCheck {
    let demand = samples
        .samples
        .iter()
        .map(|s| s.ch.lambda.abs() + nu / s.ch.rho)
        .fold(0.0, f64::max)
        * bounds.safety;
    let epsilon = STRICT_MARGIN * v_bar;
    let margin = v_bar - epsilon - demand;
    NuCheck {
        pass: margin >= 0.0 && nu > bounds.gamma_bar,
        margin,
        v_bar,
        speed_demand: demand,
        epsilon,
        nu,
        gamma_bar: bounds.gamma_bar,
    }
}

/// Largest ascent rate that passes [`check_nu`] on these samples.
pub fn nu_ceiling(bounds: &FieldBounds, samples: &RegionSamples, v_bar: f64) -> f64 {
    let usable = v_bar * (1.0 - STRICT_MARGIN) / bounds.safety;
    samples
        .samples
        .iter()
        .map(|s| s.ch.rho * (usable - s.ch.lambda.abs()))
        .fold(f64::INFINITY, f64::min)
}

/// Inputs of the sweep-budget bound, all taken from [`FieldBounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepInputs {
    pub b_omega_grad: f64,
    pub b_kappa: f64,
    pub b_tau: f64,
    pub b_rho: f64,
    pub b_lambda: f64,
    pub delta_grad: f64,
    pub gamma_bar: f64,
    pub delta_gamma: f64,
    pub v_bar: f64,
}

impl SweepInputs {
    pub fn new(bounds: &FieldBounds, delta_gamma: f64, v_bar: f64) -> Self {
        Self {
            b_omega_grad: bounds.b_omega_grad,
            b_kappa: bounds.b_kappa,
            b_tau: bounds.b_tau,
            b_rho: bounds.b_rho,
            b_lambda: bounds.b_lambda,
            delta_grad: bounds.delta_grad,
            gamma_bar: bounds.gamma_bar,
            delta_gamma,
            v_bar,
        }
    }

    // a1(x) = a + b/x, a2(x) = c x + e.
    fn coefficients(&self) -> (f64, f64, f64, f64) {
        let turn = self.b_kappa.hypot(self.b_tau);
        let a = 2.0 * self.b_omega_grad + 4.0 * self.v_bar * turn;
        let b = 2.0 * self.b_omega_grad + 2.0 * self.v_bar * turn;
        let drift = self.b_lambda + self.gamma_bar / self.delta_grad;
        let scale = 2.0 * self.b_rho / self.delta_gamma;
        let c = scale * (2.0 * self.v_bar + 2.0 * PI * drift);
        let e = scale * (self.v_bar + 2.0 * PI * drift);
        (a, b, c, e)
    }

    /// Decreasing turning cost of `k` sweeps.
    pub fn a1(&self, x: f64) -> f64 {
        let (a, b, _, _) = self.coefficients();
        a + b / x
    }

    /// Increasing level-crossing cost of `k` sweeps.
    pub fn a2(&self, x: f64) -> f64 {
        let (_, _, c, e) = self.coefficients();
        c * x + e
    }

    pub fn cost(&self, k: u32) -> f64 {
        let x = k as f64;
        self.a1(x).max(self.a2(x))
    }

    /// Positive crossing point of `a1` and `a2`, if any.
    pub fn crossing(&self) -> Option<f64> {
        let (a, b, c, e) = self.coefficients();
        // c x² + (e − a) x − b = 0 with c > 0, b ≥ 0.
        let p = e - a;
        let disc = (p * p + 4.0 * c * b).sqrt();
        let x = if p <= 0.0 { (disc - p) / (2.0 * c) } else { 2.0 * b / (p + disc) };
        (x > 0.0 && x.is_finite()).then_some(x)
    }

    /// Minimizing sweep count from the crossing point (ties go to the smaller `k`).
    pub fn argmin(&self) -> u32 {
        let Some(x) = self.crossing() else { return 1 };
        if x <= 1.0 {
            return 1;
        }
        let lo = (x.floor() as u32).max(1);
        let hi = x.ceil() as u32;
        if self.cost(hi) < self.cost(lo) {
            hi
        } else {
            lo
        }
    }

    /// Minimizing sweep count by exhaustive scan of `1..=k_max`.
    pub fn argmin_scan(&self, k_max: u32) -> u32 {
        (1..=k_max).fold(1, |best, k| if self.cost(k) < self.cost(best) { k } else { best })
    }
}

/// The three gain bounds and their maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuBound {
    /// Ascent-curvature bound, worst over the zone and both tangential signs.
    pub ascent: f64,
    /// Tangent-lock bound.
    pub tangent_lock: f64,
    /// Sweep-budget bound and the sweep count that realises it.
    pub sweep: f64,
    pub sweep_k: u32,
    pub required: f64,
}

impl MuBound {
    /// Whether `mu` clears every bound (the first two with the strict margin).
    pub fn accepts(&self, mu: f64) -> bool {
        self.inequalities(mu).iter().all(|q| q.pass)
    }

    pub fn inequalities(&self, mu: f64) -> Vec<Inequality> {
        let lhs = mu * (1.0 - STRICT_MARGIN);
        vec![
            Inequality::new("mu over ascent-curvature bound", lhs, Relation::GreaterEq, self.ascent),
            Inequality::new("mu over tangent-lock bound", lhs, Relation::GreaterEq, self.tangent_lock),
            Inequality::new("mu over sweep-budget bound", mu, Relation::Greater, self.sweep),
        ]
    }
}

/// Pointwise ascent-curvature expression for one sign of the tangential speed.
fn ascent_term(ch: &IsolineCharacteristics, gamma_bar: f64, v_t: f64) -> f64 {
    let g = gamma_bar;
    let r = ch.rho;
    -2.0 * ch.omega - ch.kappa * v_t + 2.0 * ch.tau_rho * g / r + 2.0 * ch.v_rho * g / (v_t * r) - ch.alpha / v_t
        + ch.n_rho * g * g / (v_t * r * r)
}

pub fn mu_lower_bound(
    bounds: &FieldBounds,
    samples: &RegionSamples,
    region: &RegionSpec,
    v_bar: f64,
    nu: f64,
) -> Result<MuBound, TuningError> {
    let check = check_nu(bounds, samples, v_bar, nu);
    if !check.pass {
        return Err(TuningError::Infeasible(format!(
            "ascent rate nu = {nu} fails the speed test (margin {:.3e}, gamma_bar {:.3e})",
            check.margin, check.gamma_bar
        )));
    }
    let slack = nu - bounds.gamma_bar;
    let mut ascent = f64::NEG_INFINITY;
    let mut lock = f64::NEG_INFINITY;
    for s in &samples.samples {
        let ch = &s.ch;
        let shift = ch.lambda + bounds.gamma_bar / ch.rho;
        let v_t2 = v_bar * v_bar - shift * shift;
        if !(v_t2 > 0.0) {
            return Err(TuningError::Infeasible(format!("no tangential speed left at t = {}, r = {:?}", s.t, s.r)));
        }
        let v_t = v_t2.sqrt();
        let worst = ascent_term(ch, bounds.gamma_bar, v_t).max(ascent_term(ch, bounds.gamma_bar, -v_t));
        ascent = ascent.max(worst / slack);
        let denom = ch.rho * (v_bar - ch.lambda) - nu;
        lock = lock.max((ch.omega + ch.tau_rho * (ch.lambda - v_bar)) / denom);
    }
    let sweep_inputs = SweepInputs::new(bounds, region.delta_gamma, v_bar);
    let k = sweep_inputs.argmin();
    let sweep = sweep_inputs.cost(k) / slack;
    Ok(MuBound { ascent, tangent_lock: lock, sweep, sweep_k: k, required: ascent.max(lock).max(sweep) })
}

/// Maintenance margin `δ` and the derived per-point speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningMargins {
    pub nu: f64,
    pub gamma_bar: f64,
    pub delta: f64,
}

impl TuningMargins {
    /// `ḋ` threshold `ν − δ` used by the monitors.
    pub fn threshold(&self) -> f64 {
        self.nu - self.delta
    }

    /// Normal speed surplus `vΔ = (ν − δ)/ρ`.
    pub fn v_delta(&self, rho: f64) -> f64 {
        (self.nu - self.delta) / rho
    }

    /// Remaining tangential speed `√(v̄² − (λ + vΔ)²)`, if any.
    pub fn v_t_prime(&self, v_bar: f64, lambda: f64, rho: f64) -> Option<f64> {
        let s = lambda + self.v_delta(rho);
        let q = v_bar * v_bar - s * s;
        (q >= 0.0).then(|| q.sqrt())
    }
}

pub fn margins(nu: f64, gamma_bar: f64) -> Result<TuningMargins, TuningError> {
    if !(nu > gamma_bar) {
        return Err(TuningError::Infeasible(format!("need nu > gamma_bar, got nu = {nu}, gamma_bar = {gamma_bar}")));
    }
    Ok(TuningMargins { nu, gamma_bar, delta: DELTA_FRACTION * (nu - gamma_bar) })
}

/// Result of a preset: parameters plus certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub nu: f64,
    pub mu: f64,
    pub certificate: Certificate,
}

fn gain_line(name: &str, mu: f64, term: f64) -> Inequality {
    Inequality::new(name, mu, Relation::Greater, term)
}

/// Radial field `c f(‖r − r⁰(t)‖)` with `c ∈ [c−, c+]` and a target moving at
/// speed `≤ v0` with acceleration `≤ a0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialTuningInput {
    pub r_in: f64,
    pub r_star: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub v_bar: f64,
    pub v0: f64,
    pub a0: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    pub profile: RadialProfile,
}

impl RadialTuningInput {
    fn check(&self) -> Result<(), TuningError> {
        let h = |ok: bool, what: &str| if ok { Ok(()) } else { Err(TuningError::Hypothesis(what.to_string())) };
        h(self.v_bar > self.v0, "robot must be faster than the target (v_bar > v0)")?;
        h(self.v0 >= 0.0 && self.a0 >= 0.0, "v0 and a0 must be non-negative")?;
        h(
            self.r_minus > self.r_in && self.r_in > self.r_star && self.r_star > self.r_plus && self.r_plus > 0.0,
            "radii must satisfy r_minus > r_in > r_star > r_plus > 0",
        )?;
        h(self.c_plus >= self.c_minus && self.c_minus > 0.0, "need c_plus >= c_minus > 0")?;
        let p = &self.profile;
        h(p.d1(self.r_minus) < 0.0, "profile must be strictly decreasing")
    }

    /// Level band implied by the radii for a field with scale `c`.
    pub fn region(&self, c: f64) -> Result<RegionSpec, TuningError> {
        let f = |z: f64| self.profile.value(z);
        RegionSpec::new(
            LevelFunction::constant(c * f(self.r_minus)),
            LevelFunction::constant(c * f(self.r_star)),
            LevelFunction::constant(c * f(self.r_plus)),
            self.c_minus * self.level_gap(),
            self.r_star,
        )
    }

    fn level_gap(&self) -> f64 {
        let f = |z: f64| self.profile.value(z);
        (f(self.r_star) - f(self.r_minus))
            .min(f(self.r_plus) - f(self.r_star))
            .min(2.0 * (f(self.r_in) - f(self.r_minus)))
    }
}

pub fn radial_tuning(input: &RadialTuningInput) -> Result<TunedParams, TuningError> {
    input.check()?;
    let RadialTuningInput { r_plus, v_bar, v0, a0, c_minus, c_plus, profile, r_minus, .. } = *input;
    let slope_far = profile.d1(r_minus).abs();
    let nu_cap = c_minus * slope_far * (v_bar - v0);
    let nu = 0.5 * nu_cap;
    let tangential = (v_bar * v_bar - v0 * v0).sqrt();

    let turning = ((v0 * v0 / r_plus + a0) / tangential + (v_bar + 2.0 * v0) / r_plus) / nu;
    let lock = v0 / (r_plus * (nu_cap - nu));
    let curvature = (4.0 * v0 + 6.0 * v_bar) / (nu * r_plus);
    let gap = input.level_gap();
    let crossing_literal = 2.0 * (c_plus / nu) * slope_far * (3.0 * v_bar + 4.0 * PI * v0) / gap;
    let crossing_inner =
        2.0 * (c_plus * profile.d1(r_plus).abs() / nu) * (3.0 * v_bar + 4.0 * PI * v0) / (c_minus * gap);
    let terms = [turning, lock, curvature, crossing_literal, crossing_inner];
    let mu = MU_HEADROOM * terms.iter().copied().fold(0.0, f64::max);

    let inequalities = vec![
        Inequality::new("nu below far-edge density times speed surplus", nu_cap, Relation::Greater, nu),
        Inequality::new("nu positive", nu, Relation::Greater, 0.0),
        gain_line("mu over turning term", mu, turning),
        gain_line("mu over tangent-lock term", mu, lock),
        gain_line("mu over curvature term", mu, curvature),
        gain_line("mu over level-crossing term (far-edge slope)", mu, crossing_literal),
        gain_line("mu over level-crossing term (inner-edge slope)", mu, crossing_inner),
    ];
    Ok(TunedParams { nu, mu, certificate: Certificate { preset: "radial".into(), nu, mu, inequalities } })
}

/// Escorting a target that moves at speed `≤ v0` with acceleration `≤ a0`
/// using the negated distance as the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscortTuningInput {
    pub r_star: f64,
    pub v_bar: f64,
    pub v0: f64,
    pub a0: f64,
}

impl EscortTuningInput {
    /// Level band for start distance `r_in` and outer radius `r_minus`.
    pub fn region(&self, r_in: f64, r_minus: f64) -> Result<RegionSpec, TuningError> {
        if !(r_minus > r_in && r_in > 0.0) {
            return Err(TuningError::Hypothesis("escort band needs r_minus > r_in > 0".into()));
        }
        let gap = (r_minus - self.r_star).min(0.5 * self.r_star).min(2.0 * (r_minus - r_in));
        RegionSpec::new(
            LevelFunction::constant(-r_minus),
            LevelFunction::constant(-self.r_star),
            LevelFunction::constant(-0.5 * self.r_star),
            gap,
            self.r_star,
        )
    }
}

/// The four gain terms of the escort preset, in order.
pub fn escort_terms(input: &EscortTuningInput, nu: f64) -> [f64; 4] {
    let EscortTuningInput { r_star, v_bar, v0, a0 } = *input;
    let tangential = (v_bar * v_bar - v0 * v0).sqrt();
    [
        2.0 * v0 / (r_star * (v_bar - v0 - nu)),
        (12.0 * v_bar + 8.0 * v0) / (nu * r_star),
        (16.0 * PI * v0 + 12.0 * v_bar) / (nu * r_star),
        a0 / (nu * tangential) + 2.0 / (r_star * nu) * (v_bar + 2.0 * v0 + v0 * v0 / tangential),
    ]
}

pub fn escort_tuning(input: &EscortTuningInput) -> Result<TunedParams, TuningError> {
    let EscortTuningInput { r_star, v_bar, v0, a0 } = *input;
    if !(v_bar > v0) {
        return Err(TuningError::Hypothesis("robot must be faster than the target (v_bar > v0)".into()));
    }
    if !(r_star > 0.0) || v0 < 0.0 || a0 < 0.0 {
        return Err(TuningError::Hypothesis("need r_star > 0 and non-negative v0, a0".into()));
    }
    let nu = 0.5 * (v_bar - v0);
    let terms = escort_terms(input, nu);
    let mu = MU_HEADROOM * terms.iter().copied().fold(0.0, f64::max);
    let names = ["mu over tangent-lock term", "mu over curvature term", "mu over level-crossing term", "mu over turning term"];
    let mut inequalities = vec![
        Inequality::new("nu below speed surplus", v_bar - v0, Relation::Greater, nu),
        Inequality::new("nu positive", nu, Relation::Greater, 0.0),
    ];
    inequalities.extend(names.iter().zip(terms).map(|(n, t)| gain_line(n, mu, t)));
    Ok(TunedParams { nu, mu, certificate: Certificate { preset: "escort".into(), nu, mu, inequalities } })
}

/// Generic tuning from sampled bounds: `ν` halfway between `γ̄` and its
/// ceiling, `μ` with headroom over the strongest bound.
pub fn bounds_tuning(
    field: &dyn ScalarField,
    region: &RegionSpec,
    grid: &SampleGrid,
    v_bar: f64,
    exec: Execution,
) -> Result<(TunedParams, FieldBounds), TuningError> {
    let samples = sample_region(field, region, grid, exec)?;
    let bounds = FieldBounds::from_samples(&samples, region, DEFAULT_SAFETY);
    let ceiling = nu_ceiling(&bounds, &samples, v_bar);
    if !(ceiling > bounds.gamma_bar) {
        return Err(TuningError::Infeasible(format!(
            "no ascent rate fits: ceiling {ceiling:.4e} <= level drift {:.4e}",
            bounds.gamma_bar
        )));
    }
    let nu = bounds.gamma_bar + 0.5 * (ceiling - bounds.gamma_bar);
    let mb = mu_lower_bound(&bounds, &samples, region, v_bar, nu)?;
    let mu = MU_HEADROOM * mb.required.max(f64::MIN_POSITIVE);
    let mut inequalities = check_nu(&bounds, &samples, v_bar, nu).inequalities();
    inequalities.extend(mb.inequalities(mu));
    Ok((TunedParams { nu, mu, certificate: Certificate { preset: "bounds".into(), nu, mu, inequalities } }, bounds))
}

/// Re-checks `(ν, μ)` against freshly sampled raw suprema.
pub fn validate_params(
    field: &dyn ScalarField,
    region: &RegionSpec,
    grid: &SampleGrid,
    v_bar: f64,
    nu: f64,
    mu: f64,
    safety: f64,
    exec: Execution,
) -> Result<Certificate, TuningError> {
    let samples = sample_region(field, region, grid, exec)?;
    let bounds = FieldBounds::from_samples(&samples, region, safety);
    let mut inequalities = check_nu(&bounds, &samples, v_bar, nu).inequalities();
    match mu_lower_bound(&bounds, &samples, region, v_bar, nu) {
        Ok(mb) => inequalities.extend(mb.inequalities(mu)),
        Err(TuningError::Infeasible(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(Certificate { preset: "revalidation".into(), nu, mu, inequalities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldSpec, TargetPath};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cone_region(inner: f64, outer: f64) -> RegionSpec {
        RegionSpec::new(
            LevelFunction::constant(-outer),
            LevelFunction::constant(-0.5 * (inner + outer)),
            LevelFunction::constant(-inner),
            0.25 * (outer - inner),
            0.5 * (inner + outer),
        )
        .unwrap()
    }

    fn grid(half: f64, n: usize) -> SampleGrid {
        SampleGrid { half_width: half, n_space: n, n_time: 3, t_horizon: 1.0, anchor: GridAnchor::Maximizer }
    }

    #[test]
    fn static_cone_bounds() {
        let f = FieldSpec::radial(1.0, RadialProfile::Distance, TargetPath::origin()).unwrap();
        let region = cone_region(0.5, 3.0);
        // Node spacing 0.05 puts lattice points exactly on the inner circle.
        let b = estimate_bounds(&f, &region, &grid(3.0, 121), Execution::Parallel).unwrap();
        assert!((b.b_rho - 1.1).abs() < 1e-12);
        assert!((b.delta_grad - 1.0 / 1.1).abs() < 1e-12);
        assert!(b.b_tau < 1e-12);
        assert_eq!(b.b_lambda, 0.0);
        assert_eq!(b.gamma_bar, 0.0);
        assert!((b.b_kappa - 1.1 / 0.5).abs() < 1e-9, "{}", b.b_kappa);
    }

    #[test]
    fn empty_region_is_an_error() {
        let f = FieldSpec::radial(1.0, RadialProfile::Distance, TargetPath::origin()).unwrap();
        let region = cone_region(50.0, 60.0);
        assert_eq!(estimate_bounds(&f, &region, &grid(3.0, 11), Execution::Sequential), Err(TuningError::EmptyRegion));
    }

    #[test]
    fn nu_check_examples() {
        let f = FieldSpec::linear(2.0, 0.0, 0.0).unwrap();
        let region = RegionSpec::new(
            LevelFunction::constant(-5.0),
            LevelFunction::constant(0.0),
            LevelFunction::constant(5.0),
            1.0,
            1.0,
        )
        .unwrap();
        let g = SampleGrid { anchor: GridAnchor::Fixed(Vec2::zeros()), ..grid(2.0, 9) };
        let s = sample_region(&f, &region, &g, Execution::Sequential).unwrap();
        let b = FieldBounds::from_samples(&s, &region, 1.0);
        assert!(check_nu(&b, &s, 1.0, 1.5).pass);
        assert!(!check_nu(&b, &s, 1.0, 2.5).pass);

        let drifting = RegionSpec { gamma_star: LevelFunction::Linear { value: 0.0, rate: 0.3 }, ..region };
        let b = FieldBounds::from_samples(&s, &drifting, 1.0);
        assert!((b.gamma_bar - 0.3).abs() < 1e-9);
        assert!(!check_nu(&b, &s, 1.0, b.gamma_bar).pass);
    }

    #[test]
    fn margins_rule() {
        assert!((margins(1.0, 0.0).unwrap().delta - 0.95).abs() < 1e-15);
        assert!(margins(0.3, 0.3).is_err());
        let m = margins(0.8, 0.0).unwrap();
        assert!((m.v_delta(2.0) - 0.05 * 0.8 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_bound_without_turning_picks_one() {
        let s = SweepInputs {
            b_omega_grad: 0.0,
            b_kappa: 0.0,
            b_tau: 0.0,
            b_rho: 1.0,
            b_lambda: 0.2,
            delta_grad: 1.0,
            gamma_bar: 0.0,
            delta_gamma: 0.5,
            v_bar: 1.0,
        };
        assert_eq!(s.argmin(), 1);
        assert_eq!(s.argmin_scan(K_SCAN_MAX), 1);
        assert_eq!(s.cost(1), s.a2(1.0));
    }

    #[test]
    fn sweep_argmin_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..2000 {
            let s = SweepInputs {
                b_omega_grad: rng.random_range(0.0..50.0),
                b_kappa: rng.random_range(0.0..50.0),
                b_tau: rng.random_range(0.0..20.0),
                b_rho: rng.random_range(0.01..0.5),
                b_lambda: rng.random_range(0.0..0.5),
                delta_grad: rng.random_range(0.1..1.0),
                gamma_bar: rng.random_range(0.0..0.05),
                delta_gamma: rng.random_range(0.5..5.0),
                v_bar: rng.random_range(0.5..2.0),
            };
            if s.crossing().is_some_and(|x| x < K_SCAN_MAX as f64 - 1.0) {
                assert_eq!(s.argmin(), s.argmin_scan(K_SCAN_MAX), "{s:?}");
            }
        }
    }

    #[test]
    fn escort_example_values() {
        let input = EscortTuningInput { r_star: 1.0, v_bar: 1.0, v0: 0.3, a0: 0.0 };
        let t = escort_terms(&input, 0.35);
        assert!((t[0] - 0.6 / 0.35).abs() < 1e-12);
        assert!((t[1] - 14.4 / 0.35).abs() < 1e-12);
        assert!((t[2] - (16.0 * PI * 0.3 + 12.0) / 0.35).abs() < 1e-12);
        assert!((t[3] - (2.0 / 0.35) * (1.6 + 0.09 / 0.91f64.sqrt())).abs() < 1e-12);
        assert!((t[2] - 77.4).abs() < 0.05);
        let p = escort_tuning(&input).unwrap();
        assert_eq!(p.nu, 0.35);
        assert!((p.mu - 1.05 * t[2]).abs() < 1e-12);
        assert!(p.certificate.passed());

        let still = escort_tuning(&EscortTuningInput { v0: 0.0, ..input }).unwrap();
        assert!((still.mu - 1.05 * 12.0 / 0.5).abs() < 1e-12);
        assert!(escort_tuning(&EscortTuningInput { v0: 1.0, ..input }).is_err());
    }

    #[test]
    fn radial_example_values() {
        let input = RadialTuningInput {
            r_in: 5.0,
            r_star: 1.0,
            r_minus: 10.0,
            r_plus: 0.5,
            v_bar: 1.0,
            v0: 0.0,
            a0: 0.0,
            c_minus: 1.0,
            c_plus: 1.0,
            profile: RadialProfile::Distance,
        };
        let p = radial_tuning(&input).unwrap();
        assert_eq!(p.nu, 0.5);
        let rhs = |n: &str| p.certificate.get(n).unwrap().rhs;
        assert_eq!(rhs("mu over tangent-lock term"), 0.0);
        assert!((rhs("mu over turning term") - 4.0).abs() < 1e-12);
        assert!((rhs("mu over curvature term") - 24.0).abs() < 1e-12);
        assert!((rhs("mu over level-crossing term (far-edge slope)") - 24.0).abs() < 1e-12);
        assert!((p.mu - 25.2).abs() < 1e-12);
        assert!(radial_tuning(&RadialTuningInput { v0: 1.0, ..input }).is_err());
        assert!(radial_tuning(&RadialTuningInput { r_plus: 2.0, ..input }).is_err());
    }

    #[test]
    fn certificates_are_monotone_in_target_motion() {
        let base = EscortTuningInput { r_star: 1.0, v_bar: 1.0, v0: 0.1, a0: 0.0 };
        let mut last = 0.0;
        for k in 0..9 {
            let mu = escort_tuning(&EscortTuningInput { v0: 0.1 * k as f64, a0: 0.05 * k as f64, ..base }).unwrap().mu;
            assert!(mu >= last);
            last = mu;
        }
        let radial = RadialTuningInput {
            r_in: 4.0,
            r_star: 1.0,
            r_minus: 8.0,
            r_plus: 0.5,
            v_bar: 1.0,
            v0: 0.0,
            a0: 0.0,
            c_minus: 1.0,
            c_plus: 1.2,
            profile: RadialProfile::Exponential { scale: 6.0 },
        };
        let mut last = 0.0;
        for k in 0..9 {
            let mu = radial_tuning(&RadialTuningInput { v0: 0.1 * k as f64, a0: 0.05 * k as f64, ..radial }).unwrap().mu;
            assert!(mu >= last, "{k}");
            last = mu;
        }
    }

    #[test]
    fn steady_linear_gain_bounds_degenerate() {
        let f = FieldSpec::linear(1.0, 0.0, 0.0).unwrap();
        let region = RegionSpec::new(
            LevelFunction::constant(-3.0),
            LevelFunction::constant(0.0),
            LevelFunction::constant(3.0),
            1.0,
            1.0,
        )
        .unwrap();
        let g = SampleGrid { anchor: GridAnchor::Fixed(Vec2::zeros()), ..grid(2.0, 9) };
        let s = sample_region(&f, &region, &g, Execution::Sequential).unwrap();
        let b = FieldBounds::from_samples(&s, &region, 1.0);
        let mb = mu_lower_bound(&b, &s, &region, 1.0, 0.5).unwrap();
        assert_eq!(mb.ascent, 0.0);
        assert_eq!(mb.tangent_lock, 0.0);
        assert_eq!(mb.sweep_k, 1);
        assert!(mb.accepts(mb.sweep * 1.001));
        assert!(!mb.accepts(mb.sweep));
    }

    #[test]
    fn level_catalog_round_trip() {
        for s in ["constant(value=-1)", "linear(value=0.5, rate=0.1)", "sine(mean=0, amplitude=0.2, omega=3)"] {
            let l: LevelFunction = s.parse().unwrap();
            assert_eq!(l.to_string().parse::<LevelFunction>().unwrap(), l);
        }
        assert_eq!("constant(value=2)".parse::<LevelFunction>().unwrap().rate(4.0), 0.0);
    }

    #[test]
    fn level_spacing_and_vicinity() {
        let good = cone_region(0.5, 3.0);
        assert!(good.check_level_spacing(&[0.0, 1.0]).is_ok());
        let bad = RegionSpec { delta_gamma: 2.0, ..good };
        assert!(bad.check_level_spacing(&[0.0]).is_err());

        let f = FieldSpec::radial(1.0, RadialProfile::Distance, TargetPath::origin()).unwrap();
        let g = grid(4.0, 41);
        assert!(check_vicinity(&f, &good, &g, Execution::Sequential).is_ok());
        let tight = RegionSpec { v_star_radius: 1.0, ..good };
        assert!(check_vicinity(&f, &tight, &g, Execution::Sequential).is_err());
    }
}
