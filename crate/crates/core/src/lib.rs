//! Gradient-free extremum seeking for a kinematic robot in a time-varying
//! scalar field.
//!
//! The robot moves at constant speed with heading `θ = μ (d − ν t − d⋆)`,
//! where `d` is the field value it currently measures. The crate provides the
//! field catalog, isoline kinematics, parameter tuning with certificates, a
//! deterministic closed-loop simulator with runtime monitors, closed-form
//! predictions for linear fields, and a scenario runner.

pub mod catalog;
pub mod controller;
pub mod field;
pub mod geometry;
pub mod linear;
pub mod par;
pub mod quadrature;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod tuning;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

pub use controller::ControllerParams;
pub use field::{FieldJet, FieldSpec, ScalarField};
pub use geometry::{characteristics, IsolineCharacteristics};
pub use par::Execution;
