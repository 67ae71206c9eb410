//! Kinematics of isolines: closed-form characteristics from a field jet,
//! finite-displacement oracles, and isoline extraction.

use crate::field::{FieldError, FieldJet, ScalarField};
use crate::par::{self, Execution};
use crate::Vec2;

/// Gradients shorter than this are treated as critical points.
pub const DEFAULT_GRADIENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("gradient norm {norm:e} below floor at t = {t}, r = ({x}, {y})")]
    ZeroGradient { norm: f64, t: f64, x: f64, y: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("no sign change found on the normal axis within radius {radius:e}")]
    Bracketing { radius: f64 },
    #[error("isoline at level {level} is empty on the extraction grid")]
    EmptyIsoline { level: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Unit tangent and normal of an isoline; `normal` points up the gradient and
/// `tangent` is the normal turned clockwise by a right angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetFrame {
    pub tangent: Vec2,
    pub normal: Vec2,
}

impl FrenetFrame {
    pub fn from_gradient(grad: Vec2, floor: f64) -> Option<Self> {
        let rho = grad.norm();
        if !(rho >= floor) || rho == 0.0 {
            return None;
        }
        let normal = grad / rho;
        Some(Self { tangent: Vec2::new(normal.y, -normal.x), normal })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolineCharacteristics {
    pub frame: FrenetFrame,
    /// Front velocity.
    pub lambda: f64,
    /// Density, the gradient norm.
    pub rho: f64,
    /// Signed curvature.
    pub kappa: f64,
    /// Angular velocity of the isoline.
    pub omega: f64,
    /// Angular velocity of the gradient.
    pub omega_grad: f64,
    /// Proportional density growth rate along the moving front.
    pub v_rho: f64,
    pub tau_rho: f64,
    pub n_rho: f64,
    /// Front acceleration.
    pub alpha: f64,
}

impl IsolineCharacteristics {
    /// `⟨∇D't, N⟩ / ρ`, the normal counterpart of `ω∇`.
    pub fn normal_grad_rate(&self, jet: &FieldJet) -> f64 {
        jet.grad_dt.dot(&self.frame.normal) / self.rho
    }
}

pub fn characteristics(jet: &FieldJet) -> Result<IsolineCharacteristics, GeometryError> {
    characteristics_with_floor(jet, DEFAULT_GRADIENT_FLOOR)
}

pub fn characteristics_with_floor(jet: &FieldJet, floor: f64) -> Result<IsolineCharacteristics, GeometryError> {
    let frame = FrenetFrame::from_gradient(jet.grad, floor).ok_or(GeometryError::ZeroGradient {
        norm: jet.grad.norm(),
        t: f64::NAN,
        x: f64::NAN,
        y: f64::NAN,
    })?;
    let (t, n) = (frame.tangent, frame.normal);
    let rho = jet.grad.norm();
    let h = &jet.hessian;
    let lambda = -jet.dt / rho;
    let hn = h * n;
    let w = jet.grad_dt + hn * lambda;
    let v_rho = w.dot(&n) / rho;
    Ok(IsolineCharacteristics {
        frame,
        lambda,
        rho,
        kappa: -(h * t).dot(&t) / rho,
        omega: -w.dot(&t) / rho,
        omega_grad: -jet.grad_dt.dot(&t) / rho,
        v_rho,
        tau_rho: hn.dot(&t) / rho,
        n_rho: hn.dot(&n) / rho,
        alpha: -(jet.dtt + lambda * jet.grad_dt.dot(&n)) / rho - lambda * v_rho,
    })
}

/// Characteristics at `(t, r)`, with the location attached to errors.
pub fn characteristics_at(field: &dyn ScalarField, t: f64, r: Vec2) -> Result<IsolineCharacteristics, GeometryError> {
    let jet = field.jet(t, r)?;
    characteristics(&jet).map_err(|e| match e {
        GeometryError::ZeroGradient { norm, .. } => GeometryError::ZeroGradient { norm, t, x: r.x, y: r.y },
        e => e,
    })
}

/// Root of an increasing function near zero, bracketed outward from
/// `10 · expected` and refined by bisection to full precision.
fn normal_axis_root<G: Fn(f64) -> Result<f64, FieldError>>(g: G, expected: f64) -> Result<f64, GeometryError> {
    let g0 = g(0.0)?;
    if g0 == 0.0 {
        return Ok(0.0);
    }
    // The root lies on the side where g changes sign.
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut radius = (10.0 * expected.abs()).max(1e-12);
    let mut far = g(dir * radius)?;
    let mut doublings = 0;
    while far.signum() == g0.signum() && far != 0.0 {
        doublings += 1;
        if doublings > 64 || radius > 1e6 {
            return Err(GeometryError::Bracketing { radius });
        }
        radius *= 2.0;
        far = g(dir * radius)?;
    }
    let (mut near, mut outer) = (0.0, dir * radius);
    loop {
        let mid = 0.5 * (near + outer);
        if mid == near || mid == outer || (outer - near).abs() < 1e-15 * radius.max(1e-300) {
            return Ok(0.5 * (near + outer));
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == g0.signum() {
            near = mid;
        } else {
            outer = mid;
        }
    }
}

fn frame_at(field: &dyn ScalarField, t: f64, r: Vec2) -> Result<(FieldJet, IsolineCharacteristics), GeometryError> {
    let jet = field.jet(t, r)?;
    let ch = characteristics(&jet)?;
    Ok((jet, ch))
}

/// Point where the normal axis at `(t, r)` meets the same-level isoline at `t + dt`.
fn moved_point(field: &dyn ScalarField, t: f64, r: Vec2, dt: f64) -> Result<(f64, Vec2, IsolineCharacteristics), GeometryError> {
    let (jet, ch) = frame_at(field, t, r)?;
    let n = ch.frame.normal;
    let p = normal_axis_root(|p| field.value(t + dt, r + n * p).map(|v| v - jet.value), ch.lambda * dt)?;
    Ok((p, r + n * p, ch))
}

/// Normal displacement `p(dt | t, r)` of the isoline through `r`; `p / dt → λ`.
pub fn normal_displacement_oracle(field: &dyn ScalarField, t: f64, r: Vec2, dt: f64) -> Result<f64, GeometryError> {
    moved_point(field, t, r, dt).map(|(p, _, _)| p)
}

/// `dγ / q(dγ)` where `q` is the normal distance to the isoline `γ + dγ`; tends to `ρ`.
pub fn density_oracle(field: &dyn ScalarField, t: f64, r: Vec2, d_gamma: f64) -> Result<f64, GeometryError> {
    if d_gamma == 0.0 {
        return Err(GeometryError::InvalidInput("level step must be non-zero".into()));
    }
    let (jet, ch) = frame_at(field, t, r)?;
    let n = ch.frame.normal;
    let target = jet.value + d_gamma;
    let q = normal_axis_root(|q| field.value(t, r + n * q).map(|v| v - target), d_gamma / ch.rho)?;
    Ok(d_gamma / q)
}

/// Counter-clockwise angle from `T(t, r)` to `T` at the displaced point at `t + dt`;
/// `Δφ / dt → ω`.
pub fn angular_displacement_oracle(field: &dyn ScalarField, t: f64, r: Vec2, dt: f64) -> Result<f64, GeometryError> {
    let (_, r_plus, ch) = moved_point(field, t, r, dt)?;
    let (_, ch_plus) = frame_at(field, t + dt, r_plus)?;
    let (a, b) = (ch.frame.tangent, ch_plus.frame.tangent);
    Ok((a.x * b.y - a.y * b.x).atan2(a.dot(&b)))
}

/// Spatial domain used for bounds and sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Rect { min: Vec2, max: Vec2 },
    Disk { center: Vec2, radius: f64 },
    Annulus { center: Vec2, inner: f64, outer: f64 },
}

impl Region {
    pub fn contains(&self, p: Vec2) -> bool {
        match *self {
            Region::Rect { min, max } => p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y,
            Region::Disk { center, radius } => (p - center).norm() <= radius,
            Region::Annulus { center, inner, outer } => {
                let z = (p - center).norm();
                z >= inner && z <= outer
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Region::Rect { min, max } => (max - min).norm(),
            Region::Disk { radius, .. } => 2.0 * radius,
            Region::Annulus { outer, .. } => 2.0 * outer,
        }
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match *self {
            Region::Rect { min, max } => (min, max),
            Region::Disk { center, radius: r } | Region::Annulus { center, outer: r, .. } => {
                (center - Vec2::new(r, r), center + Vec2::new(r, r))
            }
        }
    }

    /// `n × n` lattice over the bounding box, restricted to the region.
    pub fn lattice(&self, n: usize) -> Vec<Vec2> {
        let (lo, hi) = self.bounding_box();
        let step = |k: usize, a: f64, b: f64| if n == 1 { 0.5 * (a + b) } else { a + (b - a) * k as f64 / (n - 1) as f64 };
        (0..n)
            .flat_map(|j| (0..n).map(move |i| Vec2::new(step(i, lo.x, hi.x), step(j, lo.y, hi.y))))
            .filter(|p| self.contains(*p))
            .collect()
    }
}

/// Evenly spaced samples of `[t0, t1]` (a single sample for a degenerate interval).
pub fn time_samples(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n <= 1 || t1 <= t0 {
        return vec![t0];
    }
    (0..n).map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64).collect()
}

/// Bound on how far the gradient direction can turn over `interval × region`,
/// from grid suprema of `|ω∇|` and `√(κ² + τρ²)`.
pub fn gradient_rotation_bound(
    field: &dyn ScalarField,
    interval: (f64, f64),
    region: &Region,
    grid: usize,
    exec: Execution,
) -> Result<f64, GeometryError> {
    if grid < 2 {
        return Err(GeometryError::InvalidInput("grid must have at least 2 points per axis".into()));
    }
    let points = region.lattice(grid);
    let times = time_samples(interval.0, interval.1, grid);
    let pairs: Vec<(f64, Vec2)> = times.iter().flat_map(|&t| points.iter().map(move |&p| (t, p))).collect();
    let sups = par::map(exec, &pairs, |&(t, p)| {
        characteristics_at(field, t, p).map(|c| (c.omega_grad.abs(), c.kappa.hypot(c.tau_rho)))
    });
    let (mut s_time, mut s_space) = (0.0f64, 0.0f64);
    for s in sups {
        let (a, b) = s?;
        s_time = s_time.max(a);
        s_space = s_space.max(b);
    }
    Ok(s_time * (interval.1 - interval.0).abs() + s_space * region.diameter())
}

/// Net turning of the gradient along the straight space-time segment
/// `(t0, r0) → (t1, r1)`, unwrapped over `steps` sub-steps.
pub fn gradient_turn_along(
    field: &dyn ScalarField,
    from: (f64, Vec2),
    to: (f64, Vec2),
    steps: usize,
) -> Result<f64, GeometryError> {
    let angle = |s: f64| -> Result<f64, GeometryError> {
        let t = from.0 + (to.0 - from.0) * s;
        let r = from.1 + (to.1 - from.1) * s;
        let g = field.jet(t, r)?.grad;
        if g.norm() < DEFAULT_GRADIENT_FLOOR {
            return Err(GeometryError::ZeroGradient { norm: g.norm(), t, x: r.x, y: r.y });
        }
        Ok(g.y.atan2(g.x))
    };
    let mut prev = angle(0.0)?;
    let mut total = 0.0;
    for k in 1..=steps.max(1) {
        let a = angle(k as f64 / steps.max(1) as f64)?;
        let mut d = a - prev;
        d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
        total += d;
        prev = a;
    }
    Ok(total)
}

/// Uniform extraction grid for isolines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolineGrid {
    pub min: Vec2,
    pub max: Vec2,
    pub nx: usize,
    pub ny: usize,
}

impl IsolineGrid {
    pub fn square(center: Vec2, half_width: f64, n: usize) -> Self {
        let h = Vec2::new(half_width, half_width);
        Self { min: center - h, max: center + h, nx: n, ny: n }
    }

    /// Largest cell diagonal; distances are accurate to about this much.
    pub fn resolution(&self) -> f64 {
        let dx = (self.max.x - self.min.x) / (self.nx - 1) as f64;
        let dy = (self.max.y - self.min.y) / (self.ny - 1) as f64;
        dx.hypot(dy)
    }

    fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.min.x + (self.max.x - self.min.x) * i as f64 / (self.nx - 1) as f64,
            self.min.y + (self.max.y - self.min.y) * j as f64 / (self.ny - 1) as f64,
        )
    }
}

pub type Segment = (Vec2, Vec2);

fn sample_grid(field: &dyn ScalarField, t: f64, grid: &IsolineGrid) -> Result<Vec<f64>, GeometryError> {
    if grid.nx < 2 || grid.ny < 2 {
        return Err(GeometryError::InvalidInput("isoline grid needs at least 2 nodes per axis".into()));
    }
    let nudge = 1e-9 * grid.resolution();
    let mut values = Vec::with_capacity(grid.nx * grid.ny);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.node(i, j);
            // Point singularities: step off the node by a negligible amount.
            let v = match field.value(t, p) {
                Err(FieldError::Singular { .. }) => field.value(t, p + Vec2::new(nudge, nudge))?,
                other => other?,
            };
            values.push(v);
        }
    }
    Ok(values)
}

/// Marching-squares polyline segments of the level set `D(t, ·) = level`.
pub fn extract_isoline(field: &dyn ScalarField, t: f64, level: f64, grid: &IsolineGrid) -> Result<Vec<Segment>, GeometryError> {
    let values = sample_grid(field, t, grid)?;
    Ok(march(&values, grid, level))
}

fn march(values: &[f64], grid: &IsolineGrid, level: f64) -> Vec<Segment> {
    let v = |i: usize, j: usize| values[j * grid.nx + i];
    let mut out = Vec::new();
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx - 1 {
            // Corners counter-clockwise from the lower left.
            let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let vals = c.map(|(a, b)| v(a, b));
            let above = vals.map(|x| x >= level);
            let mut cuts: [Option<Vec2>; 4] = [None; 4];
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if above[a] != above[b] {
                    let s = (level - vals[a]) / (vals[b] - vals[a]);
                    let (pa, pb) = (grid.node(c[a].0, c[a].1), grid.node(c[b].0, c[b].1));
                    cuts[e] = Some(pa + (pb - pa) * s);
                }
            }
            let hits: Vec<(usize, Vec2)> = cuts.iter().enumerate().filter_map(|(e, p)| p.map(|p| (e, p))).collect();
            match hits.len() {
                2 => out.push((hits[0].1, hits[1].1)),
                4 => {
                    // Saddle cell: decide connectivity from the cell average.
                    let centre_above = vals.iter().sum::<f64>() / 4.0 >= level;
                    let p = |e: usize| cuts[e].expect("saddle has all four cuts");
                    if centre_above == above[0] {
                        out.push((p(0), p(1)));
                        out.push((p(2), p(3)));
                    } else {
                        out.push((p(3), p(0)));
                        out.push((p(1), p(2)));
                    }
                }
                _ => {}
            }
        }
    }
    out
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn point_segment_distance(p: Vec2, s: &Segment) -> f64 {
    let d = s.1 - s.0;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return (p - s.0).norm();
    }
    let u = ((p - s.0).dot(&d) / len2).clamp(0.0, 1.0);
    (p - (s.0 + d * u)).norm()
}

fn segments_intersect(a: &Segment, b: &Segment) -> bool {
    let d1 = cross(a.1 - a.0, b.0 - a.0);
    let d2 = cross(a.1 - a.0, b.1 - a.0);
    let d3 = cross(b.1 - b.0, a.0 - b.0);
    let d4 = cross(b.1 - b.0, a.1 - b.0);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

pub fn segment_distance(a: &Segment, b: &Segment) -> f64 {
    if segments_intersect(a, b) {
        return 0.0;
    }
    point_segment_distance(a.0, b)
        .min(point_segment_distance(a.1, b))
        .min(point_segment_distance(b.0, a))
        .min(point_segment_distance(b.1, a))
}

/// True when two segments cross at interior points.
pub fn segments_cross(a: &Segment, b: &Segment) -> bool {
    segments_intersect(a, b)
}

/// Minimum distance between the polyline approximations of two isolines.
pub fn isoline_distance(
    field: &dyn ScalarField,
    t: f64,
    gamma1: f64,
    gamma2: f64,
    grid: &IsolineGrid,
) -> Result<f64, GeometryError> {
    let values = sample_grid(field, t, grid)?;
    let a = march(&values, grid, gamma1);
    if a.is_empty() {
        return Err(GeometryError::EmptyIsoline { level: gamma1 });
    }
    if gamma1 == gamma2 {
        return Ok(0.0);
    }
    let b = march(&values, grid, gamma2);
    if b.is_empty() {
        return Err(GeometryError::EmptyIsoline { level: gamma2 });
    }
    let best = a
        .iter()
        .map(|sa| b.iter().map(|sb| segment_distance(sa, sb)).fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}
