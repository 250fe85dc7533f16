//! Surface metrics on a global planar chart.
//!
//! Every shipped family is diagonal in chart coordinates, `ds² = A(x,y)² dx² + B(x,y)² dy²`:
//! warped products have `A = g(y)`, `B = 1`; conformal metrics have `A = B = e^φ`. Constant
//! curvature `K0 < 0` is realized in Fermi coordinates along `y = 0`, i.e. the warped profile
//! `cosh(√-K0 · y)`.

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::scalar::Real;

/// Axis-aligned chart rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window<S> {
    pub xmin: S,
    pub xmax: S,
    pub ymin: S,
    pub ymax: S,
}

impl<S: Real> Window<S> {
    pub fn new(xmin: S, xmax: S, ymin: S, ymax: S) -> Self {
        Self { xmin, xmax, ymin, ymax }
    }

    pub fn contains(&self, p: [S; 2]) -> bool {
        p[0] >= self.xmin && p[0] <= self.xmax && p[1] >= self.ymin && p[1] <= self.ymax
    }

    pub fn padded(&self, pad: S) -> Self {
        Self {
            xmin: self.xmin - pad,
            xmax: self.xmax + pad,
            ymin: self.ymin - pad,
            ymax: self.ymax + pad,
        }
    }

    pub fn width(&self) -> S {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> S {
        self.ymax - self.ymin
    }
}

/// Warp profile `g(y) > 0` of `dy² + g(y)² dx²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum WarpProfile<S> {
    /// `g ≡ 1`.
    Flat,
    /// `g = cosh(rate·y)`, curvature `-rate²`.
    Cosh { rate: S },
    /// `g = exp(-rate·y)`, horocyclic coordinates of curvature `-rate²`.
    Exp { rate: S },
    /// `g = 1` on `|y| ≤ half_width`, `cosh(|y| - half_width)` outside. C¹ with a
    /// curvature jump from 0 to -1 at the band edge.
    FlatBand { half_width: S },
}

impl<S: Real> WarpProfile<S> {
    /// `(g, g', g'')` at `y`.
    pub fn eval(&self, y: S) -> (S, S, S) {
        match *self {
            WarpProfile::Flat => (S::one(), S::zero(), S::zero()),
            WarpProfile::Cosh { rate } => {
                let (c, s) = ((rate * y).cosh(), (rate * y).sinh());
                (c, rate * s, rate * rate * c)
            }
            WarpProfile::Exp { rate } => {
                let e = (-rate * y).exp();
                (e, -rate * e, rate * rate * e)
            }
            WarpProfile::FlatBand { half_width } => {
                let d = y.abs() - half_width;
                if d <= S::zero() {
                    (S::one(), S::zero(), S::zero())
                } else {
                    (d.cosh(), y.signum() * d.sinh(), d.cosh())
                }
            }
        }
    }

    /// Minimum of `g` over `[y0, y1]`.
    fn min_on(&self, y0: S, y1: S) -> S {
        match *self {
            WarpProfile::Flat | WarpProfile::FlatBand { .. } | WarpProfile::Cosh { .. } => {
                let y = S::zero().max(y0).min(y1);
                self.eval(y).0
            }
            WarpProfile::Exp { rate } => {
                let y = if rate >= S::zero() { y1 } else { y0 };
                self.eval(y).0
            }
        }
    }
}

/// Conformal factor `φ` of `e^{2φ}(dx² + dy²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phi", rename_all = "snake_case")]
pub enum ConformalFactor<S> {
    /// `φ ≡ c`: flat.
    Constant { c: S },
    /// `φ = a(x² + y²)`, `a ≥ 0`: curvature `-4a e^{-2φ}`.
    Radial { a: S },
    /// `φ = -ln y` on `y > 0`: the upper half-plane, curvature -1.
    HalfPlane,
}

/// `φ` and its partial derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiJet<S> {
    pub v: S,
    pub x: S,
    pub y: S,
    pub xx: S,
    pub xy: S,
    pub yy: S,
}

impl<S: Real> ConformalFactor<S> {
    pub fn eval(&self, p: [S; 2]) -> PhiJet<S> {
        let z = S::zero();
        match *self {
            ConformalFactor::Constant { c } => PhiJet { v: c, x: z, y: z, xx: z, xy: z, yy: z },
            ConformalFactor::Radial { a } => {
                let two = S::lit(2.0);
                PhiJet {
                    v: a * (p[0] * p[0] + p[1] * p[1]),
                    x: two * a * p[0],
                    y: two * a * p[1],
                    xx: two * a,
                    xy: z,
                    yy: two * a,
                }
            }
            ConformalFactor::HalfPlane => {
                let y = p[1];
                PhiJet { v: -y.ln(), x: z, y: -y.recip(), xx: z, xy: z, yy: (y * y).recip() }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartKind<S> {
    ConstantCurvature { k0: S },
    Conformal { factor: ConformalFactor<S> },
    Warped { warp: WarpProfile<S> },
}

/// Levi-Civita connection coefficients `Γ^i_{jk}` in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Christoffel<S> {
    pub x_xx: S,
    pub x_xy: S,
    pub x_yy: S,
    pub y_xx: S,
    pub y_xy: S,
    pub y_yy: S,
}

impl<S: Real> Christoffel<S> {
    /// `-Γ(v, v)`: the chart acceleration of a geodesic with velocity `v`.
    pub fn acceleration(&self, v: [S; 2]) -> [S; 2] {
        let two = S::lit(2.0);
        let (vx, vy) = (v[0], v[1]);
        [
            -(self.x_xx * vx * vx + two * self.x_xy * vx * vy + self.x_yy * vy * vy),
            -(self.y_xx * vx * vx + two * self.y_xy * vx * vy + self.y_yy * vy * vy),
        ]
    }

    pub fn as_array(&self) -> [S; 6] {
        [self.x_xx, self.x_xy, self.x_yy, self.y_xx, self.y_xy, self.y_yy]
    }
}

/// An explicit nonpositively curved surface metric on a planar chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricChart<S> {
    pub kind: ChartKind<S>,
    /// Curvature bound: `K ≥ -kappa²` on the window.
    pub kappa: S,
    pub window: Window<S>,
}

enum Resolved<S> {
    Warped(WarpProfile<S>),
    Conformal(ConformalFactor<S>),
}

impl<S: Real> MetricChart<S> {
    /// Builds and validates a chart.
    pub fn new(kind: ChartKind<S>, kappa: S, window: Window<S>) -> Result<Self> {
        let chart = Self { kind, kappa, window };
        chart.validate()?;
        Ok(chart)
    }

    /// Builds a chart with the natural curvature bound of its family.
    pub fn with_default_kappa(kind: ChartKind<S>, window: Window<S>) -> Result<Self> {
        let kappa = Self { kind, kappa: S::zero(), window }.natural_kappa();
        Self::new(kind, kappa, window)
    }

    pub fn constant(k0: S, window: Window<S>) -> Result<Self> {
        Self::with_default_kappa(ChartKind::ConstantCurvature { k0 }, window)
    }

    pub fn warped(warp: WarpProfile<S>, window: Window<S>) -> Result<Self> {
        Self::with_default_kappa(ChartKind::Warped { warp }, window)
    }

    pub fn conformal(factor: ConformalFactor<S>, window: Window<S>) -> Result<Self> {
        Self::with_default_kappa(ChartKind::Conformal { factor }, window)
    }

    /// Smallest `κ ≥ 0` with `K ≥ -κ²` everywhere on the window (closed form per family).
    pub fn natural_kappa(&self) -> S {
        match self.kind {
            ChartKind::ConstantCurvature { k0 } => (-k0).max(S::zero()).sqrt(),
            ChartKind::Warped { warp } => match warp {
                WarpProfile::Flat => S::zero(),
                WarpProfile::Cosh { rate } | WarpProfile::Exp { rate } => rate.abs(),
                WarpProfile::FlatBand { half_width } => {
                    let w = &self.window;
                    if w.ymax.abs().max(w.ymin.abs()) > half_width {
                        S::one()
                    } else {
                        S::zero()
                    }
                }
            },
            ChartKind::Conformal { factor } => match factor {
                ConformalFactor::Constant { .. } => S::zero(),
                ConformalFactor::Radial { a } => (S::lit(4.0) * a).max(S::zero()).sqrt(),
                ConformalFactor::HalfPlane => S::one(),
            },
        }
    }

    fn resolved(&self) -> Resolved<S> {
        match self.kind {
            ChartKind::ConstantCurvature { k0 } => {
                if k0 == S::zero() {
                    Resolved::Warped(WarpProfile::Flat)
                } else {
                    Resolved::Warped(WarpProfile::Cosh { rate: (-k0).sqrt() })
                }
            }
            ChartKind::Warped { warp } => Resolved::Warped(warp),
            ChartKind::Conformal { factor } => Resolved::Conformal(factor),
        }
    }

    /// Checks the family invariants and the curvature bound on a sample grid of the window.
    pub fn validate(&self) -> Result<()> {
        let w = &self.window;
        let finite = [w.xmin, w.xmax, w.ymin, w.ymax, self.kappa].iter().all(|v| v.is_finite());
        if !finite || w.xmin >= w.xmax || w.ymin >= w.ymax {
            return Err(GeoError::InvalidChart("window must be a finite nonempty rectangle".into()));
        }
        if self.kappa < S::zero() {
            return Err(GeoError::InvalidChart("kappa must be nonnegative".into()));
        }
        match self.kind {
            ChartKind::ConstantCurvature { k0 } if k0 > S::zero() => {
                return Err(GeoError::InvalidChart("constant curvature K0 must be <= 0".into()));
            }
            ChartKind::Warped { warp: WarpProfile::Cosh { rate } | WarpProfile::Exp { rate } }
                if !rate.is_finite() =>
            {
                return Err(GeoError::InvalidChart("warp rate must be finite".into()));
            }
            ChartKind::Warped { warp: WarpProfile::FlatBand { half_width } } if !(half_width >= S::zero()) => {
                return Err(GeoError::InvalidChart("band half-width must be >= 0".into()));
            }
            ChartKind::Conformal { factor: ConformalFactor::Radial { a } } if !(a >= S::zero()) => {
                return Err(GeoError::InvalidChart("radial conformal factor needs a >= 0".into()));
            }
            ChartKind::Conformal { factor: ConformalFactor::HalfPlane } if w.ymin <= S::zero() => {
                return Err(GeoError::InvalidChart("half-plane window must have ymin > 0".into()));
            }
            _ => {}
        }
        let n = 41usize;
        let slack = S::lit(1e-9) * (S::one() + self.kappa * self.kappa);
        for i in 0..n {
            for j in 0..n {
                let fx = S::from_usize_lossy(i) / S::from_usize_lossy(n - 1);
                let fy = S::from_usize_lossy(j) / S::from_usize_lossy(n - 1);
                let p = [w.xmin + fx * w.width(), w.ymin + fy * w.height()];
                if let Resolved::Warped(warp) = self.resolved() {
                    let (g, _, g2) = warp.eval(p[1]);
                    if !(g > S::zero()) || g2 < S::zero() {
                        return Err(GeoError::InvalidChart(format!(
                            "warp profile must satisfy g > 0, g'' >= 0 (fails at y = {})",
                            p[1]
                        )));
                    }
                }
                let k = self.curvature(p);
                if !k.is_finite() || k > slack {
                    return Err(GeoError::InvalidChart(format!(
                        "curvature {} > 0 at ({}, {})",
                        k, p[0], p[1]
                    )));
                }
                if k < -self.kappa * self.kappa - slack {
                    return Err(GeoError::InvalidChart(format!(
                        "curvature {} below -kappa^2 = {} at ({}, {})",
                        k,
                        -self.kappa * self.kappa,
                        p[0],
                        p[1]
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_window(&self, p: [S; 2]) -> Result<()> {
        if self.window.contains(p) {
            Ok(())
        } else {
            Err(GeoError::OutsideWindow { x: p[0].to_f64_lossy(), y: p[1].to_f64_lossy() })
        }
    }

    /// Whether the metric is defined at `p` (only the half-plane model has a boundary).
    pub fn in_domain(&self, p: [S; 2]) -> bool {
        let finite = p[0].is_finite() && p[1].is_finite();
        match self.kind {
            ChartKind::Conformal { factor: ConformalFactor::HalfPlane } => finite && p[1] > S::zero(),
            _ => finite,
        }
    }

    /// Gaussian curvature at `p`, checked against the window.
    pub fn curvature_at(&self, p: [S; 2]) -> Result<S> {
        self.check_window(p)?;
        Ok(self.curvature(p))
    }

    /// Gaussian curvature without the window check.
    pub fn curvature(&self, p: [S; 2]) -> S {
        if let ChartKind::ConstantCurvature { k0 } = self.kind {
            return k0;
        }
        match self.resolved() {
            Resolved::Warped(warp) => {
                let (g, _, g2) = warp.eval(p[1]);
                -g2 / g
            }
            Resolved::Conformal(factor) => {
                let phi = factor.eval(p);
                -(-(phi.v + phi.v)).exp() * (phi.xx + phi.yy)
            }
        }
    }

    /// Christoffel symbols at `p`, checked against the window.
    pub fn christoffel(&self, p: [S; 2]) -> Result<Christoffel<S>> {
        self.check_window(p)?;
        Ok(self.connection(p))
    }

    /// Christoffel symbols without the window check.
    pub fn connection(&self, p: [S; 2]) -> Christoffel<S> {
        match self.resolved() {
            Resolved::Warped(warp) => {
                let (g, g1, _) = warp.eval(p[1]);
                Christoffel { x_xy: g1 / g, y_xx: -g * g1, ..Default::default() }
            }
            Resolved::Conformal(factor) => {
                let phi = factor.eval(p);
                Christoffel {
                    x_xx: phi.x,
                    x_xy: phi.y,
                    x_yy: -phi.x,
                    y_xx: -phi.y,
                    y_xy: phi.x,
                    y_yy: phi.y,
                }
            }
        }
    }

    /// Orthonormal frame scales `(A, B)` with `g = diag(A², B²)`.
    pub fn scales(&self, p: [S; 2]) -> (S, S) {
        match self.resolved() {
            Resolved::Warped(warp) => (warp.eval(p[1]).0, S::one()),
            Resolved::Conformal(factor) => {
                let e = factor.eval(p).v.exp();
                (e, e)
            }
        }
    }

    /// Metric components `(g11, g12, g22)` at `p`.
    pub fn metric_tensor(&self, p: [S; 2]) -> (S, S, S) {
        let (a, b) = self.scales(p);
        (a * a, S::zero(), b * b)
    }

    /// `‖v‖_g` at `p`.
    pub fn metric_norm(&self, p: [S; 2], v: [S; 2]) -> S {
        let (a, b) = self.scales(p);
        (a * v[0]).hypot(b * v[1])
    }

    /// Components of `v` in the orthonormal frame `(∂x/A, ∂y/B)`.
    pub fn to_frame(&self, p: [S; 2], v: [S; 2]) -> [S; 2] {
        let (a, b) = self.scales(p);
        [a * v[0], b * v[1]]
    }

    /// Chart components of the frame vector `w`.
    pub fn from_frame(&self, p: [S; 2], w: [S; 2]) -> [S; 2] {
        let (a, b) = self.scales(p);
        [w[0] / a, w[1] / b]
    }

    /// Unit chart direction at `p` making orthonormal-frame angle `angle` with `∂x`.
    pub fn direction_from_angle(&self, p: [S; 2], angle: S) -> [S; 2] {
        self.from_frame(p, [angle.cos(), angle.sin()])
    }

    /// Orthonormal-frame angle of the chart vector `v` at `p`.
    pub fn frame_angle(&self, p: [S; 2], v: [S; 2]) -> S {
        let w = self.to_frame(p, v);
        w[1].atan2(w[0])
    }

    /// Chart acceleration `-Γ(v,v)` of a geodesic through `p` with chart velocity `v`.
    pub fn geodesic_acceleration(&self, p: [S; 2], v: [S; 2]) -> [S; 2] {
        self.connection(p).acceleration(v)
    }

    /// Metric length of the chord `p → q` measured with the metric at the midpoint.
    /// Accurate to third order in `|q - p|`.
    pub fn chord_length(&self, p: [S; 2], q: [S; 2]) -> S {
        let half = S::lit(0.5);
        let m = [(p[0] + q[0]) * half, (p[1] + q[1]) * half];
        self.metric_norm(m, [q[0] - p[0], q[1] - p[1]])
    }

    /// Lower bound of `min(A, B)` over the chart rectangle `[x0,x1]×[y0,y1]`.
    pub fn min_scale_on(&self, x0: S, x1: S, y0: S, y1: S) -> S {
        match self.resolved() {
            Resolved::Warped(warp) => warp.min_on(y0, y1).min(S::one()),
            Resolved::Conformal(factor) => match factor {
                ConformalFactor::Constant { c } => c.exp(),
                ConformalFactor::Radial { a } => {
                    let cx = S::zero().max(x0).min(x1);
                    let cy = S::zero().max(y0).min(y1);
                    (a * (cx * cx + cy * cy)).exp()
                }
                ConformalFactor::HalfPlane => y1.recip(),
            },
        }
    }

    /// Whether curvature depends on `y` only (warped families and constant curvature).
    pub fn is_warped(&self) -> bool {
        matches!(self.resolved(), Resolved::Warped(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win() -> Window<f64> {
        Window::new(-5.0, 5.0, -3.0, 3.0)
    }

    #[test]
    fn curvature_examples() {
        let flat = MetricChart::conformal(ConformalFactor::Constant { c: 0.0 }, win()).unwrap();
        assert_eq!(flat.curvature_at([0.0, 0.0]).unwrap(), 0.0);
        let hyp = MetricChart::warped(WarpProfile::Cosh { rate: 1.0 }, win()).unwrap();
        assert!((hyp.curvature_at([3.0, 0.7]).unwrap() + 1.0).abs() < 1e-14);
        let band = MetricChart::warped(WarpProfile::FlatBand { half_width: 1.0 }, win()).unwrap();
        assert_eq!(band.curvature_at([0.0, 0.0]).unwrap(), 0.0);
        assert!((band.curvature_at([0.0, 2.0]).unwrap() + 1.0).abs() < 1e-14);
        assert_eq!(band.kappa, 1.0);
        let c = MetricChart::constant(-4.0, win()).unwrap();
        assert_eq!(c.curvature_at([1.0, 1.0]).unwrap(), -4.0);
        assert_eq!(c.kappa, 2.0);
    }

    #[test]
    fn curvature_outside_window_is_domain_error() {
        let flat = MetricChart::constant(0.0, win()).unwrap();
        assert!(matches!(flat.curvature_at([10.0, 0.0]), Err(GeoError::OutsideWindow { .. })));
        assert!(flat.christoffel([0.0, -7.0]).is_err());
    }

    #[test]
    fn christoffel_examples() {
        let flat = MetricChart::conformal(ConformalFactor::Constant { c: 0.0 }, win()).unwrap();
        assert_eq!(flat.christoffel([0.3, 0.2]).unwrap().as_array(), [0.0; 6]);
        let c2 = MetricChart::conformal(ConformalFactor::Constant { c: 2f64.ln() }, win()).unwrap();
        assert_eq!(c2.christoffel([0.3, 0.2]).unwrap().as_array(), [0.0; 6]);
        let hyp = MetricChart::warped(WarpProfile::Cosh { rate: 1.0 }, win()).unwrap();
        let g = hyp.christoffel([0.0, 0.0]).unwrap();
        assert_eq!(g.y_xx, 0.0);
        assert_eq!(g.x_xy, 0.0);
        let g = hyp.christoffel([0.0, 0.5]).unwrap();
        assert!((g.y_xx + 0.5f64.cosh() * 0.5f64.sinh()).abs() < 1e-15);
        assert!((g.x_xy - 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn metric_norm_examples() {
        let flat = MetricChart::constant(0.0, win()).unwrap();
        assert_eq!(flat.metric_norm([0.0, 0.0], [1.0, 0.0]), 1.0);
        let hyp = MetricChart::warped(WarpProfile::Cosh { rate: 1.0 }, win()).unwrap();
        assert_eq!(hyp.metric_norm([0.0, 0.0], [1.0, 0.0]), 1.0);
        let c2 = MetricChart::conformal(ConformalFactor::Constant { c: 2f64.ln() }, win()).unwrap();
        assert!((c2.metric_norm([1.0, 1.0], [1.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_charts_rejected() {
        assert!(MetricChart::constant(1.0, win()).is_err());
        assert!(MetricChart::new(ChartKind::ConstantCurvature { k0: -1.0 }, 0.5, win()).is_err());
        assert!(MetricChart::conformal(ConformalFactor::HalfPlane, win()).is_err());
        assert!(MetricChart::conformal(ConformalFactor::HalfPlane, Window::new(-1.0, 1.0, 0.5, 3.0)).is_ok());
        assert!(MetricChart::new(
            ChartKind::Warped { warp: WarpProfile::Flat },
            0.0,
            Window::new(1.0, 0.0, 0.0, 1.0)
        )
        .is_err());
    }

    #[test]
    fn half_plane_curvature_is_minus_one() {
        let hp = MetricChart::conformal(ConformalFactor::HalfPlane, Window::<f64>::new(-2.0, 2.0, 0.2, 4.0)).unwrap();
        for &p in &[[0.0, 0.3], [1.0, 2.0], [-1.5, 3.9]] {
            assert!((hp.curvature_at(p).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_conformal_bound() {
        let r = MetricChart::conformal(ConformalFactor::Radial { a: 0.25 }, win()).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert!((r.curvature_at([0.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
    }
}
