//! Dynamic scalar fields `D(t, r)` with closed-form second-order jets.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Add;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{CatalogCall, CatalogError};
use crate::{Mat2, Vec2};

/// Default central-difference steps for [`fd_jet_oracle`].
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Radial fields are treated as singular closer than this to their center.
const RADIAL_CORE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("field is singular at t = {t}, r = ({x}, {y})")]
    Singular { t: f64, x: f64, y: f64 },
    #[error("invalid field parameter: {0}")]
    InvalidParameter(String),
}

/// Value and all first and second space-time derivatives of `D` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub grad: Vec2,
    pub hessian: Mat2,
    /// Partial time derivative `D't`.
    pub dt: f64,
    /// Spatial gradient of `D't`.
    pub grad_dt: Vec2,
    /// Second partial time derivative `D''tt`.
    pub dtt: f64,
}

impl FieldJet {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            grad: Vec2::zeros(),
            hessian: Mat2::zeros(),
            dt: 0.0,
            grad_dt: Vec2::zeros(),
            dtt: 0.0,
        }
    }

    /// Flat view in a fixed order, handy for norms and comparisons.
    pub fn to_array(&self) -> [f64; 12] {
        [
            self.value,
            self.grad.x,
            self.grad.y,
            self.hessian[(0, 0)],
            self.hessian[(0, 1)],
            self.hessian[(1, 0)],
            self.hessian[(1, 1)],
            self.dt,
            self.grad_dt.x,
            self.grad_dt.y,
            self.dtt,
            0.0,
        ]
    }

    /// Largest entrywise difference of the derivative blocks (value excluded).
    pub fn max_derivative_diff(&self, other: &FieldJet) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        a.iter()
            .zip(b.iter())
            .skip(1)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Derivative-block error relative to `reference`, floored at unit scale.
    pub fn relative_error(&self, reference: &FieldJet) -> f64 {
        let scale = reference
            .to_array()
            .iter()
            .skip(1)
            .map(|v| v.abs())
            .fold(1.0, f64::max);
        self.max_derivative_diff(reference) / scale
    }

    /// Jet of `g(r - c(t))` from the spatial jet of `g` at `r - c(t)` and the
    /// path velocity and acceleration.
    pub fn translated(value: f64, grad: Vec2, hessian: Mat2, vel: Vec2, acc: Vec2) -> Self {
        let hv = hessian * vel;
        Self {
            value,
            grad,
            hessian,
            dt: -grad.dot(&vel),
            grad_dt: -hv,
            dtt: vel.dot(&hv) - grad.dot(&acc),
        }
    }
}

impl Add for FieldJet {
    type Output = FieldJet;

    fn add(self, o: FieldJet) -> FieldJet {
        FieldJet {
            value: self.value + o.value,
            grad: self.grad + o.grad,
            hessian: self.hessian + o.hessian,
            dt: self.dt + o.dt,
            grad_dt: self.grad_dt + o.grad_dt,
            dtt: self.dtt + o.dtt,
        }
    }
}

/// Anything that can report a jet. Implementations must be pure.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn jet(&self, t: f64, r: Vec2) -> Result<FieldJet, FieldError>;

    fn value(&self, t: f64, r: Vec2) -> Result<f64, FieldError> {
        self.jet(t, r).map(|j| j.value)
    }

    /// Location of the maximizer `r⁰(t)` when known.
    fn maximizer(&self, _t: f64) -> Option<Vec2> {
        None
    }
}

/// Motion of a field feature (center of a radial field or a bump).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetPath {
    Static { x: f64, y: f64 },
    Linear { x0: f64, y0: f64, vx: f64, vy: f64 },
    Circle { cx: f64, cy: f64, radius: f64, omega: f64, phase: f64 },
}

impl TargetPath {
    pub fn origin() -> Self {
        TargetPath::Static { x: 0.0, y: 0.0 }
    }

    pub fn position(&self, t: f64) -> Vec2 {
        match *self {
            TargetPath::Static { x, y } => Vec2::new(x, y),
            TargetPath::Linear { x0, y0, vx, vy } => Vec2::new(x0 + vx * t, y0 + vy * t),
            TargetPath::Circle { cx, cy, radius, omega, phase } => {
                let a = omega * t + phase;
                Vec2::new(cx + radius * a.cos(), cy + radius * a.sin())
            }
        }
    }

    pub fn velocity(&self, t: f64) -> Vec2 {
        match *self {
            TargetPath::Static { .. } => Vec2::zeros(),
            TargetPath::Linear { vx, vy, .. } => Vec2::new(vx, vy),
            TargetPath::Circle { radius, omega, phase, .. } => {
                let a = omega * t + phase;
                radius * omega * Vec2::new(-a.sin(), a.cos())
            }
        }
    }

    pub fn acceleration(&self, t: f64) -> Vec2 {
        match *self {
            TargetPath::Static { .. } | TargetPath::Linear { .. } => Vec2::zeros(),
            TargetPath::Circle { radius, omega, phase, .. } => {
                let a = omega * t + phase;
                -radius * omega * omega * Vec2::new(a.cos(), a.sin())
            }
        }
    }

    /// Uniform bound on the path speed.
    pub fn speed_bound(&self) -> f64 {
        match *self {
            TargetPath::Static { .. } => 0.0,
            TargetPath::Linear { vx, vy, .. } => vx.hypot(vy),
            TargetPath::Circle { radius, omega, .. } => (radius * omega).abs(),
        }
    }

    /// Uniform bound on the path acceleration.
    pub fn acceleration_bound(&self) -> f64 {
        match *self {
            TargetPath::Static { .. } | TargetPath::Linear { .. } => 0.0,
            TargetPath::Circle { radius, omega, .. } => (radius * omega * omega).abs(),
        }
    }

    fn validate(&self) -> Result<(), FieldError> {
        let ok = match *self {
            TargetPath::Static { x, y } => x.is_finite() && y.is_finite(),
            TargetPath::Linear { x0, y0, vx, vy } => [x0, y0, vx, vy].iter().all(|v| v.is_finite()),
            TargetPath::Circle { cx, cy, radius, omega, phase } => {
                [cx, cy, radius, omega, phase].iter().all(|v| v.is_finite()) && radius >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(FieldError::InvalidParameter(format!("bad target path {self}")))
        }
    }
}

impl fmt::Display for TargetPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TargetPath::Static { x, y } => write!(f, "static(x={x:?}, y={y:?})"),
            TargetPath::Linear { x0, y0, vx, vy } => {
                write!(f, "linear(x0={x0:?}, y0={y0:?}, vx={vx:?}, vy={vy:?})")
            }
            TargetPath::Circle { cx, cy, radius, omega, phase } => write!(
                f,
                "circle(cx={cx:?}, cy={cy:?}, radius={radius:?}, omega={omega:?}, phase={phase:?})"
            ),
        }
    }
}

impl FromStr for TargetPath {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let call = CatalogCall::parse(s)?;
        let path = match call.name.as_str() {
            "static" => {
                call.expect_only(&["x", "y"])?;
                TargetPath::Static { x: call.get_or("x", 0.0), y: call.get_or("y", 0.0) }
            }
            "linear" => {
                call.expect_only(&["x0", "y0", "vx", "vy"])?;
                TargetPath::Linear {
                    x0: call.get_or("x0", 0.0),
                    y0: call.get_or("y0", 0.0),
                    vx: call.get_or("vx", 0.0),
                    vy: call.get_or("vy", 0.0),
                }
            }
            "circle" => {
                call.expect_only(&["cx", "cy", "radius", "omega", "phase"])?;
                TargetPath::Circle {
                    cx: call.get_or("cx", 0.0),
                    cy: call.get_or("cy", 0.0),
                    radius: call.require("radius")?,
                    omega: call.require("omega")?,
                    phase: call.get_or("phase", 0.0),
                }
            }
            other => return Err(CatalogError::UnknownName(other.to_string())),
        };
        path.validate().map_err(|e| CatalogError::Invalid(e.to_string()))?;
        Ok(path)
    }
}

/// Decreasing convex profiles `f` for radial fields `c·f(‖r − r⁰‖)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialProfile {
    /// `f(z) = -z`.
    Distance,
    /// `f(z) = exp(-z / scale)`.
    Exponential { scale: f64 },
    /// `f(z) = 1 / (z + offset)`.
    Inverse { offset: f64 },
}

impl RadialProfile {
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            RadialProfile::Distance => -z,
            RadialProfile::Exponential { scale } => (-z / scale).exp(),
            RadialProfile::Inverse { offset } => 1.0 / (z + offset),
        }
    }

    pub fn d1(&self, z: f64) -> f64 {
        match *self {
            RadialProfile::Distance => -1.0,
            RadialProfile::Exponential { scale } => -(-z / scale).exp() / scale,
            RadialProfile::Inverse { offset } => -1.0 / (z + offset).powi(2),
        }
    }

    pub fn d2(&self, z: f64) -> f64 {
        match *self {
            RadialProfile::Distance => 0.0,
            RadialProfile::Exponential { scale } => (-z / scale).exp() / (scale * scale),
            RadialProfile::Inverse { offset } => 2.0 / (z + offset).powi(3),
        }
    }

    fn validate(&self) -> Result<(), FieldError> {
        match *self {
            RadialProfile::Distance => Ok(()),
            RadialProfile::Exponential { scale } if scale > 0.0 && scale.is_finite() => Ok(()),
            RadialProfile::Inverse { offset } if offset > 0.0 && offset.is_finite() => Ok(()),
            _ => Err(FieldError::InvalidParameter(format!(
                "profile {self} must be strictly decreasing and convex"
            ))),
        }
    }
}

impl fmt::Display for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RadialProfile::Distance => write!(f, "distance()"),
            RadialProfile::Exponential { scale } => write!(f, "exponential(scale={scale:?})"),
            RadialProfile::Inverse { offset } => write!(f, "inverse(offset={offset:?})"),
        }
    }
}

impl FromStr for RadialProfile {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let call = CatalogCall::parse(s)?;
        let p = match call.name.as_str() {
            "distance" => {
                call.expect_only(&[])?;
                RadialProfile::Distance
            }
            "exponential" => {
                call.expect_only(&["scale"])?;
                RadialProfile::Exponential { scale: call.get_or("scale", 1.0) }
            }
            "inverse" => {
                call.expect_only(&["offset"])?;
                RadialProfile::Inverse { offset: call.get_or("offset", 1.0) }
            }
            other => return Err(CatalogError::UnknownName(other.to_string())),
        };
        p.validate().map_err(|e| CatalogError::Invalid(e.to_string()))?;
        Ok(p)
    }
}

/// Steady linear field `n (x cos φ + y sin φ) + d0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFieldParams {
    pub n: f64,
    pub phi: f64,
    pub d0: f64,
}

impl LinearFieldParams {
    pub fn new(n: f64, phi: f64, d0: f64) -> Result<Self, FieldError> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(FieldError::InvalidParameter(format!("linear field needs n > 0, got {n}")));
        }
        if !phi.is_finite() || !d0.is_finite() {
            return Err(FieldError::InvalidParameter("linear field phi and d0 must be finite".into()));
        }
        Ok(Self { n, phi, d0 })
    }

    /// Unit gradient direction `n0`.
    pub fn direction(&self) -> Vec2 {
        Vec2::new(self.phi.cos(), self.phi.sin())
    }

    pub fn value(&self, r: Vec2) -> f64 {
        self.n * r.dot(&self.direction()) + self.d0
    }
}

/// `amplitude · exp(-‖r − p(t)‖² / width²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub width: f64,
    pub path: TargetPath,
}

impl GaussianBump {
    fn validate(&self) -> Result<(), FieldError> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(FieldError::InvalidParameter("bump amplitude must be > 0".into()));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(FieldError::InvalidParameter("bump width must be > 0".into()));
        }
        self.path.validate()
    }

    fn jet(&self, t: f64, r: Vec2) -> FieldJet {
        let s = r - self.path.position(t);
        let w2 = self.width * self.width;
        let g = self.amplitude * (-s.norm_squared() / w2).exp();
        let grad = s * (-2.0 * g / w2);
        let hessian = (s * s.transpose()) * (4.0 * g / (w2 * w2)) - Mat2::identity() * (2.0 * g / w2);
        FieldJet::translated(g, grad, hessian, self.path.velocity(t), self.path.acceleration(t))
    }
}

/// User-supplied field; trusted to return consistent jets.
#[derive(Clone)]
pub struct CustomField(pub Arc<dyn ScalarField>);

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({:?})", self.0)
    }
}

/// Closure-backed field, mostly for tests and one-off experiments.
pub struct FnField<F> {
    name: &'static str,
    jet_fn: F,
    maximizer: Option<fn(f64) -> Vec2>,
}

impl<F> FnField<F>
where
    F: Fn(f64, Vec2) -> FieldJet + Send + Sync,
{
    pub fn new(name: &'static str, jet_fn: F) -> Self {
        Self { name, jet_fn, maximizer: None }
    }

    pub fn with_maximizer(mut self, m: fn(f64) -> Vec2) -> Self {
        self.maximizer = Some(m);
        self
    }
}

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({})", self.name)
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(f64, Vec2) -> FieldJet + Send + Sync,
{
    fn jet(&self, t: f64, r: Vec2) -> Result<FieldJet, FieldError> {
        Ok((self.jet_fn)(t, r))
    }

    fn maximizer(&self, t: f64) -> Option<Vec2> {
        self.maximizer.map(|m| m(t))
    }
}

/// The built-in field catalog.
#[derive(Debug, Clone)]
pub enum FieldSpec {
    Linear(LinearFieldParams),
    Radial { c: f64, profile: RadialProfile, path: TargetPath },
    Gaussian { bumps: Vec<GaussianBump> },
    Custom(CustomField),
}

impl FieldSpec {
    pub fn linear(n: f64, phi: f64, d0: f64) -> Result<Self, FieldError> {
        LinearFieldParams::new(n, phi, d0).map(FieldSpec::Linear)
    }

    pub fn radial(c: f64, profile: RadialProfile, path: TargetPath) -> Result<Self, FieldError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(FieldError::InvalidParameter(format!("radial field needs c > 0, got {c}")));
        }
        profile.validate()?;
        path.validate()?;
        Ok(FieldSpec::Radial { c, profile, path })
    }

    pub fn gaussian(bumps: Vec<GaussianBump>) -> Result<Self, FieldError> {
        if bumps.is_empty() {
            return Err(FieldError::InvalidParameter("gaussian field needs at least one bump".into()));
        }
        for b in &bumps {
            b.validate()?;
        }
        Ok(FieldSpec::Gaussian { bumps })
    }

    pub fn custom(field: Arc<dyn ScalarField>) -> Self {
        FieldSpec::Custom(CustomField(field))
    }

    pub fn as_linear(&self) -> Option<&LinearFieldParams> {
        match self {
            FieldSpec::Linear(p) => Some(p),
            _ => None,
        }
    }
}

impl ScalarField for FieldSpec {
    fn jet(&self, t: f64, r: Vec2) -> Result<FieldJet, FieldError> {
        match self {
            FieldSpec::Linear(p) => {
                let mut j = FieldJet::zero();
                j.value = p.value(r);
                j.grad = p.direction() * p.n;
                Ok(j)
            }
            FieldSpec::Radial { c, profile, path } => {
                let s = r - path.position(t);
                let z = s.norm();
                if z < RADIAL_CORE {
                    return Err(FieldError::Singular { t, x: r.x, y: r.y });
                }
                let u = s / z;
                let (f0, f1, f2) = (profile.value(z), profile.d1(z), profile.d2(z));
                let uu = u * u.transpose();
                let grad = u * (c * f1);
                let hessian = uu * (c * f2) + (Mat2::identity() - uu) * (c * f1 / z);
                Ok(FieldJet::translated(c * f0, grad, hessian, path.velocity(t), path.acceleration(t)))
            }
            FieldSpec::Gaussian { bumps } => {
                Ok(bumps.iter().fold(FieldJet::zero(), |acc, b| acc + b.jet(t, r)))
            }
            FieldSpec::Custom(c) => c.0.jet(t, r),
        }
    }

    fn value(&self, t: f64, r: Vec2) -> Result<f64, FieldError> {
        match self {
            FieldSpec::Linear(p) => Ok(p.value(r)),
            FieldSpec::Radial { c, profile, path } => {
                let z = (r - path.position(t)).norm();
                if z < RADIAL_CORE {
                    return Err(FieldError::Singular { t, x: r.x, y: r.y });
                }
                Ok(c * profile.value(z))
            }
            FieldSpec::Gaussian { bumps } => Ok(bumps
                .iter()
                .map(|b| {
                    let s = r - b.path.position(t);
                    b.amplitude * (-s.norm_squared() / (b.width * b.width)).exp()
                })
                .sum()),
            FieldSpec::Custom(c) => c.0.value(t, r),
        }
    }

    fn maximizer(&self, t: f64) -> Option<Vec2> {
        match self {
            FieldSpec::Linear(_) => None,
            FieldSpec::Radial { path, .. } => Some(path.position(t)),
            FieldSpec::Gaussian { bumps } if bumps.len() == 1 => Some(bumps[0].path.position(t)),
            FieldSpec::Gaussian { .. } => None,
            FieldSpec::Custom(c) => c.0.maximizer(t),
        }
    }
}

/// Shorthand for `field.jet(t, r)`.
pub fn eval_jet(field: &dyn ScalarField, t: f64, r: Vec2) -> Result<FieldJet, FieldError> {
    field.jet(t, r)
}

/// Jet assembled purely from central differences of `value_fn`.
pub fn fd_jet_oracle<F>(value_fn: F, t: f64, r: Vec2, h_space: f64, h_time: f64) -> FieldJet
where
    F: Fn(f64, Vec2) -> f64,
{
    let (h, k) = (h_space, h_time);
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    let v = |dt: f64, dr: Vec2| value_fn(t + dt, r + dr);

    let f0 = v(0.0, Vec2::zeros());
    let gx = (v(0.0, ex) - v(0.0, -ex)) / (2.0 * h);
    let gy = (v(0.0, ey) - v(0.0, -ey)) / (2.0 * h);
    let hxx = (v(0.0, ex) - 2.0 * f0 + v(0.0, -ex)) / (h * h);
    let hyy = (v(0.0, ey) - 2.0 * f0 + v(0.0, -ey)) / (h * h);
    let hxy = (v(0.0, ex + ey) - v(0.0, ex - ey) - v(0.0, -ex + ey) + v(0.0, -ex - ey)) / (4.0 * h * h);
    let ft = (v(k, Vec2::zeros()) - v(-k, Vec2::zeros())) / (2.0 * k);
    let ftt = (v(k, Vec2::zeros()) - 2.0 * f0 + v(-k, Vec2::zeros())) / (k * k);
    let mixed = |e: Vec2| (v(k, e) - v(k, -e) - v(-k, e) + v(-k, -e)) / (4.0 * k * h);

    FieldJet {
        value: f0,
        grad: Vec2::new(gx, gy),
        hessian: Mat2::new(hxx, hxy, hxy, hyy),
        dt: ft,
        grad_dt: Vec2::new(mixed(ex), mixed(ey)),
        dtt: ftt,
    }
}

/// [`fd_jet_oracle`] applied to a field's own value function.
pub fn fd_jet_of(field: &dyn ScalarField, t: f64, r: Vec2, h_space: f64, h_time: f64) -> Result<FieldJet, FieldError> {
    // Surface singularities up front rather than inside the closure.
    field.value(t, r)?;
    Ok(fd_jet_oracle(|tt, rr| field.value(tt, rr).unwrap_or(f64::NAN), t, r, h_space, h_time))
}

/// Seeded sum of `complexity` moving Gaussian bumps.
///
/// # Panics
/// If `complexity` is zero.
pub fn make_random_smooth_field(seed: u64, complexity: usize) -> FieldSpec {
    assert!(complexity >= 1, "complexity must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps = (0..complexity)
        .map(|_| GaussianBump {
            amplitude: rng.random_range(0.5..1.5),
            width: rng.random_range(1.0..2.5),
            path: TargetPath::Circle {
                cx: rng.random_range(-2.0..2.0),
                cy: rng.random_range(-2.0..2.0),
                radius: rng.random_range(0.0..1.0),
                omega: rng.random_range(-0.5..0.5),
                phase: rng.random_range(0.0..TAU),
            },
        })
        .collect();
    FieldSpec::Gaussian { bumps }
}
