//! The measurement-only steering law `θ = μ (d − ν t − d⋆)`.

use serde::{Deserialize, Serialize};

use crate::Vec2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("controller parameter {name} must be {rule}, got {value}")]
pub struct ControllerError {
    pub name: &'static str,
    pub rule: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    v_bar: f64,
    nu: f64,
    mu: f64,
    d_star: f64,
}

impl ControllerParams {
    pub fn new(v_bar: f64, nu: f64, mu: f64, d_star: f64) -> Result<Self, ControllerError> {
        for (name, value) in [("v_bar", v_bar), ("nu", nu), ("mu", mu)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControllerError { name, rule: "finite and > 0", value });
            }
        }
        if !d_star.is_finite() {
            return Err(ControllerError { name: "d_star", rule: "finite", value: d_star });
        }
        Ok(Self { v_bar, nu, mu, d_star })
    }

    pub fn v_bar(&self) -> f64 {
        self.v_bar
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn d_star(&self) -> f64 {
        self.d_star
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self, ControllerError> {
        Self::new(self.v_bar, self.nu, mu, self.d_star)
    }

    pub fn with_d_star(&self, d_star: f64) -> Result<Self, ControllerError> {
        Self::new(self.v_bar, self.nu, self.mu, d_star)
    }

    /// Ascending reference `d0(t) = ν t + d⋆`.
    pub fn reference(&self, t: f64) -> f64 {
        self.nu * t + self.d_star
    }

    /// Unwrapped heading for measurement `d` at time `t`.
    pub fn heading(&self, d: f64, t: f64) -> f64 {
        self.mu * (d - self.reference(t))
    }

    /// Full-speed velocity along `theta`.
    pub fn velocity(&self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(self.v_bar * c, self.v_bar * s)
    }
}

/// Unit vector `e(θ)`.
pub fn unit(theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

    #[test]
    fn reference_is_affine() {
        let p = ControllerParams::new(1.0, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(p.reference(0.0), 1.0);
        assert_eq!(p.reference(2.0), 2.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ControllerParams::new(1.0, 0.0, 1.0, 0.0).is_err());
        assert!(ControllerParams::new(1.0, 1.0, -1.0, 0.0).is_err());
        assert!(ControllerParams::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(ControllerParams::new(1.0, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn heading_examples() {
        let p = ControllerParams::new(1.5, 0.5, 1.0, 0.0).unwrap();
        let t = 3.0;
        let th = p.heading(p.reference(t), t);
        assert_eq!(th, 0.0);
        assert_eq!(p.velocity(th), Vec2::new(1.5, 0.0));

        let p2 = ControllerParams::new(1.0, 0.5, 2.0, 0.0).unwrap();
        let th = p2.heading(p2.reference(t) + FRAC_PI_4, t);
        assert!((th - FRAC_PI_2).abs() < 1e-15);
        assert!(p2.velocity(th).x.abs() < 1e-15 && (p2.velocity(th).y - 1.0).abs() < 1e-15);

        let th = p.heading(p.reference(t) + TAU + 0.1, t);
        assert!((th - (TAU + 0.1)).abs() < 1e-12, "heading must stay unwrapped");
        assert!((p.velocity(th) - p.velocity(0.1)).norm() < 1e-12);
        assert!((p.velocity(PI) - Vec2::new(-1.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn speed_is_saturated() {
        let p = ControllerParams::new(2.5, 1.0, 1.0, 0.0).unwrap();
        for k in 0..1000 {
            let th = -50.0 + 0.1 * k as f64;
            assert!((p.velocity(th).norm() - 2.5).abs() < 1e-15 * 2.5 * 4.0);
            assert_eq!(p.heading(0.3, th).to_bits(), p.heading(0.3, th).to_bits());
        }
    }
}
