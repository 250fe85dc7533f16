#![allow(dead_code)]

use geoflow::geodesic::UnitTangentVector;
use geoflow::metric::{ConformalFactor, MetricChart, WarpProfile, Window};

pub fn hyperbolic() -> MetricChart<f64> {
    MetricChart::constant(-1.0, Window::new(-6.0, 6.0, -6.0, 6.0)).unwrap()
}

pub fn curvature_minus_four() -> MetricChart<f64> {
    MetricChart::constant(-4.0, Window::new(-3.0, 3.0, -3.0, 3.0)).unwrap()
}

pub fn flat() -> MetricChart<f64> {
    MetricChart::constant(0.0, Window::new(-6.0, 6.0, -6.0, 6.0)).unwrap()
}

pub fn band() -> MetricChart<f64> {
    MetricChart::warped(WarpProfile::FlatBand { half_width: 1.0 }, Window::new(-6.0, 6.0, -6.0, 6.0)).unwrap()
}

pub fn horocyclic() -> MetricChart<f64> {
    MetricChart::warped(WarpProfile::Exp { rate: 1.0 }, Window::new(-6.0, 6.0, -3.0, 3.0)).unwrap()
}

pub fn radial() -> MetricChart<f64> {
    MetricChart::conformal(ConformalFactor::Radial { a: 0.05 }, Window::new(-2.0, 2.0, -2.0, 2.0)).unwrap()
}

pub fn half_plane() -> MetricChart<f64> {
    MetricChart::conformal(ConformalFactor::HalfPlane, Window::new(-2.0, 2.0, 0.5, 3.0)).unwrap()
}

/// Every shipped chart family with a label.
pub fn shipped() -> Vec<(&'static str, MetricChart<f64>)> {
    vec![
        ("hyperbolic", hyperbolic()),
        ("minus_four", curvature_minus_four()),
        ("flat", flat()),
        ("band", band()),
        ("horocyclic", horocyclic()),
        ("radial", radial()),
        ("half_plane", half_plane()),
    ]
}

/// Point of the window at relative coordinates `(fx, fy) ∈ [0, 1]²`.
pub fn at(chart: &MetricChart<f64>, fx: f64, fy: f64) -> [f64; 2] {
    let w = &chart.window;
    [w.xmin + fx * (w.xmax - w.xmin), w.ymin + fy * (w.ymax - w.ymin)]
}

/// Point of the central half of the window, away from the edges.
pub fn inner(chart: &MetricChart<f64>, fx: f64, fy: f64) -> [f64; 2] {
    at(chart, 0.25 + 0.5 * fx, 0.25 + 0.5 * fy)
}

pub fn unit(chart: &MetricChart<f64>, base: [f64; 2], angle: f64) -> UnitTangentVector<f64> {
    UnitTangentVector::from_angle(chart, base, angle).unwrap()
}
