//! Numerical geodesic-flow laboratory for nonpositively curved surfaces.
//!
//! Modules build on each other bottom-up: [`metric`] charts, [`geodesic`] trajectories and
//! distances, [`jacobi`] Jacobi/Riccati solutions and Green limits, [`green`] frames and
//! classification, [`horo`] Busemann functions, horocycles and strips, and [`entropy`]
//! separated sets, expansivity and brackets.
//!
//! Everything is generic over the scalar type ([`Real`], implemented for `f32` and `f64`);
//! the aliases at the crate root fix `f64`.

// `!(x > y)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
pub mod error;
pub mod geodesic;
pub mod green;
pub mod horo;
pub mod jacobi;
pub mod metric;
pub mod ode;
pub mod scalar;

pub use error::{GeoError, Result};
pub use scalar::Real;

pub type Chart = metric::MetricChart<f64>;
pub type Window = metric::Window<f64>;
pub type Unit = geodesic::UnitTangentVector<f64>;
pub type Trajectory = geodesic::GeodesicTrajectory<f64>;
pub type Steps = ode::StepControl<f64>;
