//! Predictor–corrector tracing of horocycles `{b^± = 0}` and strip detection.
//!
//! The predictor steps along the gradient rotated by 90° in the orthonormal frame. The
//! corrector iterates `q ← q - b(q) ∇b(q)`, which is Newton's method along the gradient
//! line since `|∇b|_g = 1`.

use crate::error::{GeoError, Result};
use crate::geodesic::UnitTangentVector;
use crate::metric::MetricChart;
use crate::scalar::{wrap_angle, Real};

use super::{BusemannField, BusemannOptions, Sign};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions<S> {
    /// Nominal arclength step.
    pub step: S,
    /// Corrector target `|b| ≤ trace_tol`.
    pub trace_tol: S,
    pub max_corrector: usize,
    pub busemann: BusemannOptions<S>,
}

impl<S: Real> Default for TraceOptions<S> {
    fn default() -> Self {
        Self {
            step: S::lit(0.05),
            trace_tol: S::floor_tol(S::lit(1e-6)),
            max_corrector: 30,
            busemann: BusemannOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint<S> {
    /// Signed arclength from the base point.
    pub s: S,
    pub point: [S; 2],
    /// Leaf vector direction: `-∇b⁺` on stable traces, `∇b⁻` on unstable ones.
    pub normal: [S; 2],
    pub b_plus: S,
    pub b_minus: S,
    pub grad_plus: [S; 2],
    pub grad_minus: [S; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorocycleTrace<S> {
    pub theta: UnitTangentVector<S>,
    pub sign: Sign,
    /// Ordered by `s`.
    pub points: Vec<TracePoint<S>>,
    /// The corrector failed before the requested half-length on some side.
    pub truncated: bool,
    pub step: S,
}

impl<S: Real> HorocycleTrace<S> {
    /// Index of the base point (`s = 0`).
    pub fn base_index(&self) -> usize {
        self.points.iter().position(|p| p.s == S::zero()).unwrap_or(0)
    }
}

struct Tracer<'a, S: Real> {
    chart: &'a MetricChart<S>,
    sign: Sign,
    own: BusemannField<S>,
    /// The opposite-sign field, evaluated at every point when present.
    other: Option<BusemannField<S>>,
    opts: &'a TraceOptions<S>,
}

/// One side of a trace in progress.
struct Walk<S> {
    dir: S,
    q: [S; 2],
    grad: [S; 2],
    s: S,
}

impl<S: Real> Tracer<'_, S> {
    fn new<'a>(
        chart: &'a MetricChart<S>,
        theta: &UnitTangentVector<S>,
        sign: Sign,
        reach: S,
        opts: &'a TraceOptions<S>,
        with_other: bool,
    ) -> Result<Tracer<'a, S>> {
        let r = reach.min(S::one()).max(opts.step);
        let perp = chart.direction_from_angle(theta.base, theta.angle(chart) + S::FRAC_PI_2());
        let probes: Vec<[S; 2]> = [r, -r]
            .iter()
            .map(|&d| [theta.base[0] + d * perp[0], theta.base[1] + d * perp[1]])
            .filter(|&p| chart.in_domain(p))
            .collect();
        let other_sign = match sign {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        };
        let own = BusemannField::probed(chart, theta, sign, &probes, &opts.busemann)?;
        let other = if with_other {
            Some(BusemannField::probed(chart, theta, other_sign, &probes, &opts.busemann)?)
        } else {
            None
        };
        Ok(Tracer { chart, sign, own, other, opts })
    }

    fn point(&mut self, s: S, q: [S; 2], b: S, g: [S; 2]) -> Result<TracePoint<S>> {
        let (bo, go) = match &mut self.other {
            Some(f) => f.eval(q)?,
            None => (S::nan(), [S::nan(), S::nan()]),
        };
        let (bp, gp, bm, gm) = match self.sign {
            Sign::Plus => (b, g, bo, go),
            Sign::Minus => (bo, go, b, g),
        };
        let normal = match self.sign {
            Sign::Plus => [-g[0], -g[1]],
            Sign::Minus => g,
        };
        Ok(TracePoint { s, point: q, normal, b_plus: bp, b_minus: bm, grad_plus: gp, grad_minus: gm })
    }

    fn start(&mut self) -> Result<(TracePoint<S>, [S; 2])> {
        let base = self.own.theta.base;
        let (b, g) = self.own.eval(base)?;
        Ok((self.point(S::zero(), base, b, g)?, g))
    }

    /// Next point on one side; `None` when the corrector fails.
    fn step(&mut self, w: &mut Walk<S>) -> Result<Option<TracePoint<S>>> {
        let chart = self.chart;
        let h = self.opts.step;
        let gf = chart.to_frame(w.q, w.grad);
        let tangent = chart.from_frame(w.q, [-gf[1] * w.dir, gf[0] * w.dir]);
        let mut q = [w.q[0] + h * tangent[0], w.q[1] + h * tangent[1]];
        let mut done = None;
        for _ in 0..self.opts.max_corrector {
            if !chart.in_domain(q) {
                return Ok(None);
            }
            let (b, g) = match self.own.eval(q) {
                Ok(v) => v,
                Err(_) => return Ok(None),
            };
            if b.abs() <= self.opts.trace_tol {
                done = Some((b, g));
                break;
            }
            q = [q[0] - b * g[0], q[1] - b * g[1]];
        }
        let Some((b, g)) = done else { return Ok(None) };
        let ds = chart.chord_length(w.q, q);
        if ds < S::lit(0.9) * h || ds > S::lit(1.1) * h {
            return Ok(None);
        }
        w.s = w.s + ds;
        w.q = q;
        w.grad = g;
        let p = match self.point(w.s * w.dir, q, b, g) {
            Ok(p) => p,
            Err(_) => return Ok(None),
        };
        Ok(Some(p))
    }
}

/// Traces `{b^sign_θ = 0}` through `base(θ)` for arclength `halflength` on both sides.
pub fn trace_horocycle<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    sign: Sign,
    halflength: S,
    opts: &TraceOptions<S>,
) -> Result<HorocycleTrace<S>> {
    trace_with(chart, theta, sign, halflength, opts, true)
}

/// The trace alone: the opposite-sign fields of the points are left NaN.
pub(crate) fn trace_leaf<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    sign: Sign,
    halflength: S,
    opts: &TraceOptions<S>,
) -> Result<HorocycleTrace<S>> {
    trace_with(chart, theta, sign, halflength, opts, false)
}

fn trace_with<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    sign: Sign,
    halflength: S,
    opts: &TraceOptions<S>,
    with_other: bool,
) -> Result<HorocycleTrace<S>> {
    if !(halflength > S::zero()) || !(opts.step > S::zero()) {
        return Err(GeoError::Precondition("trace half-length and step must be positive".into()));
    }
    let mut tr = Tracer::new(chart, theta, sign, halflength, opts, with_other)?;
    let (p0, g0) = tr.start()?;
    let mut sides = Vec::new();
    let mut truncated = false;
    for dir in [S::one(), -S::one()] {
        let mut w = Walk { dir, q: p0.point, grad: g0, s: S::zero() };
        let mut pts = Vec::new();
        while w.s < halflength {
            match tr.step(&mut w)? {
                Some(p) => pts.push(p),
                None => {
                    truncated = true;
                    break;
                }
            }
        }
        sides.push(pts);
    }
    let mut points: Vec<TracePoint<S>> = sides.pop().unwrap_or_default();
    points.reverse();
    points.push(p0);
    points.extend(sides.pop().unwrap_or_default());
    Ok(HorocycleTrace { theta: *theta, sign, points, truncated, step: opts.step })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripOptions<S> {
    pub strip_tol: S,
    pub trace: TraceOptions<S>,
}

impl<S: Real> Default for StripOptions<S> {
    fn default() -> Self {
        Self { strip_tol: S::lit(1e-3), trace: TraceOptions::default() }
    }
}

/// The arc `I(θ) = H⁺ ∩ H⁻` through `base(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripRecord<S> {
    pub theta: UnitTangentVector<S>,
    pub width: S,
    pub endpoints: [[S; 2]; 2],
    /// Signed arclengths of the endpoints along the stable trace.
    pub s_range: (S, S),
    /// The arc reached the end of the searched (or traceable) part of `H⁺`.
    pub exceeded_window: bool,
    pub search_halflength: S,
    pub strip_tol: S,
    /// Stable-trace points visited, ordered by `s`.
    pub points: Vec<TracePoint<S>>,
}

impl<S: Real> StripRecord<S> {
    pub fn is_trivial(&self) -> bool {
        self.width <= self.strip_tol
    }

    /// Point of the strip at signed arclength `s` (linear between trace points).
    pub fn point_at(&self, s: S) -> Option<[S; 2]> {
        let pts = &self.points;
        if pts.is_empty() || s < pts[0].s || s > pts[pts.len() - 1].s {
            return None;
        }
        let i = pts.partition_point(|p| p.s <= s).saturating_sub(1).min(pts.len().saturating_sub(2));
        if pts.len() == 1 {
            return Some(pts[0].point);
        }
        let (a, b) = (&pts[i], &pts[i + 1]);
        let f = if b.s > a.s { (s - a.s) / (b.s - a.s) } else { S::zero() };
        Some([a.point[0] + f * (b.point[0] - a.point[0]), a.point[1] + f * (b.point[1] - a.point[1])])
    }
}

/// Mismatch of the two leaves at a stable-trace point: `max(|b⁻|, ∠(-∇b⁺, ∇b⁻))`.
fn mismatch<S: Real>(chart: &MetricChart<S>, p: &TracePoint<S>) -> S {
    let a = chart.frame_angle(p.point, [-p.grad_plus[0], -p.grad_plus[1]]);
    let b = chart.frame_angle(p.point, p.grad_minus);
    p.b_minus.abs().max(wrap_angle(a - b).abs())
}

/// Detects the strip through `base(θ)`: the maximal arc of the stable horocycle where the
/// unstable horocycle coincides with it as a set of unit normal vectors, i.e. `|b⁻| ≤ tol`
/// and the two normals agree within `tol` radians. Crossings are interpolated linearly.
pub fn detect_strip<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    search_halflength: S,
    opts: &StripOptions<S>,
) -> Result<StripRecord<S>> {
    if !(search_halflength > S::zero()) {
        return Err(GeoError::Precondition("strip search half-length must be positive".into()));
    }
    let tol = opts.strip_tol;
    let topts = &opts.trace;
    let mut tr = Tracer::new(chart, theta, Sign::Plus, search_halflength, topts, true)?;
    let (p0, g0) = tr.start()?;
    let m0 = mismatch(chart, &p0);
    if m0 > tol {
        return Ok(StripRecord {
            theta: *theta,
            width: S::zero(),
            endpoints: [theta.base, theta.base],
            s_range: (S::zero(), S::zero()),
            exceeded_window: false,
            search_halflength,
            strip_tol: tol,
            points: vec![p0],
        });
    }
    let mut exceeded = false;
    let mut ends = [(S::zero(), theta.base); 2];
    let mut sides: Vec<Vec<TracePoint<S>>> = Vec::new();
    for (k, dir) in [S::one(), -S::one()].into_iter().enumerate() {
        let mut w = Walk { dir, q: p0.point, grad: g0, s: S::zero() };
        let mut prev = (p0, m0);
        let mut pts = Vec::new();
        loop {
            if w.s >= search_halflength {
                exceeded = true;
                ends[k] = (prev.0.s, prev.0.point);
                break;
            }
            let Some(p) = tr.step(&mut w)? else {
                exceeded = true;
                ends[k] = (prev.0.s, prev.0.point);
                break;
            };
            let m = mismatch(chart, &p);
            pts.push(p);
            if m > tol {
                let f = (tol - prev.1) / (m - prev.1);
                let s = prev.0.s + f * (p.s - prev.0.s);
                let q = [
                    prev.0.point[0] + f * (p.point[0] - prev.0.point[0]),
                    prev.0.point[1] + f * (p.point[1] - prev.0.point[1]),
                ];
                ends[k] = (s, q);
                break;
            }
            prev = (p, m);
        }
        sides.push(pts);
    }
    let mut points: Vec<TracePoint<S>> = sides.pop().unwrap_or_default();
    points.reverse();
    points.push(p0);
    points.extend(sides.pop().unwrap_or_default());
    let (hi, lo) = (ends[0], ends[1]);
    Ok(StripRecord {
        theta: *theta,
        width: hi.0 - lo.0,
        endpoints: [lo.1, hi.1],
        s_range: (lo.0, hi.0),
        exceeded_window: exceeded,
        search_halflength,
        strip_tol: tol,
        points,
    })
}

/// Shape of a traced leaf at its base point versus the Green frame `(1, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafTangency<S> {
    /// `⟨∇_T N, T⟩_g` from the traced normals.
    pub u_trace: S,
    pub u_green: S,
    /// `|atan(u_trace) - atan(u_green)|`.
    pub angle_diff: S,
}

/// Compares the traced leaf direction at the base point with the Green frame `(1, u_green)`.
///
/// The leaf through `(q, N(q))` has tangent `(T, ∇_T N)`, which in the Jacobi frame is
/// `(1, ⟨∇_T N, T⟩)`. The covariant derivative uses central differences of the normals and
/// the Christoffel symbols at the base point, Richardson-extrapolated over the `±1` and `±2`
/// stencils when the trace is long enough.
pub fn leaf_tangency<S: Real>(chart: &MetricChart<S>, trace: &HorocycleTrace<S>, u_green: S) -> Result<LeafTangency<S>> {
    let i = trace.base_index();
    if i == 0 || i + 1 >= trace.points.len() {
        return Err(GeoError::Precondition("trace must extend on both sides of the base point".into()));
    }
    let o = &trace.points[i];
    let (g11, _, g22) = chart.metric_tensor(o.point);
    let c = chart.connection(o.point);
    let n = o.normal;
    let central = |k: usize| {
        let (a, b) = (&trace.points[i - k], &trace.points[i + k]);
        let ds = b.s - a.s;
        let tan = [(b.point[0] - a.point[0]) / ds, (b.point[1] - a.point[1]) / ds];
        let tn = chart.metric_norm(o.point, tan);
        let tan = [tan[0] / tn, tan[1] / tn];
        let dn = [(b.normal[0] - a.normal[0]) / ds, (b.normal[1] - a.normal[1]) / ds];
        let cov = [
            dn[0] + c.x_xx * tan[0] * n[0] + c.x_xy * (tan[0] * n[1] + tan[1] * n[0]) + c.x_yy * tan[1] * n[1],
            dn[1] + c.y_xx * tan[0] * n[0] + c.y_xy * (tan[0] * n[1] + tan[1] * n[0]) + c.y_yy * tan[1] * n[1],
        ];
        (g11 * cov[0] * tan[0] + g22 * cov[1] * tan[1], ds)
    };
    let (u1, h1) = central(1);
    let u_trace = if i >= 2 && i + 2 < trace.points.len() {
        // the stencils need not be exactly 1:2 after the corrector moved the points
        let (u2, h2) = central(2);
        let r = (h2 / h1) * (h2 / h1);
        (r * u1 - u2) / (r - S::one())
    } else {
        u1
    };
    Ok(LeafTangency { u_trace, u_green, angle_diff: (u_trace.atan() - u_green.atan()).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{WarpProfile, Window};

    fn unit(c: &MetricChart<f64>, b: [f64; 2], d: [f64; 2]) -> UnitTangentVector<f64> {
        UnitTangentVector::new(c, b, d).unwrap()
    }

    #[test]
    fn flat_trace_is_a_line() {
        let c = MetricChart::constant(0.0, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let th = unit(&c, [0.0, 0.0], [0.0, 1.0]);
        let t = trace_horocycle(&c, &th, Sign::Plus, 1.0, &TraceOptions::default()).unwrap();
        assert!(!t.truncated);
        for p in &t.points {
            assert!(p.point[1].abs() < 1e-5, "{:?}", p.point);
            assert!(p.normal[0].abs() < 1e-3 && (p.normal[1] - 1.0).abs() < 1e-6);
        }
        assert!(t.points.first().unwrap().s <= -1.0 && t.points.last().unwrap().s >= 1.0);
    }

    #[test]
    fn horocyclic_trace() {
        let c = MetricChart::warped(WarpProfile::Exp { rate: 1.0 }, Window::<f64>::new(-5.0, 5.0, -2.0, 2.0)).unwrap();
        let th = unit(&c, [0.0, 0.0], [0.0, 1.0]);
        let t = trace_horocycle(&c, &th, Sign::Plus, 1.0, &TraceOptions::default()).unwrap();
        for p in &t.points {
            assert!(p.point[1].abs() < 1e-5 && (p.normal[1] - 1.0).abs() < 1e-5, "{:?}", p);
        }
    }

    #[test]
    fn hyperbolic_trace_symmetry() {
        let c = MetricChart::warped(WarpProfile::Cosh { rate: 1.0 }, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let th = unit(&c, [0.0, 0.0], [0.0, 1.0]);
        let t = trace_horocycle(&c, &th, Sign::Plus, 1.0, &TraceOptions::default()).unwrap();
        let n = t.points.len();
        let i = t.base_index();
        for k in 1..=(i.min(n - 1 - i)) {
            let (a, b) = (t.points[i - k].point, t.points[i + k].point);
            assert!((a[0] + b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6, "{a:?} {b:?}");
        }
        let tan = leaf_tangency(&c, &t, -1.0).unwrap();
        assert!(tan.angle_diff < 1e-2, "{tan:?}");
    }

    #[test]
    fn band_strip() {
        let c = MetricChart::warped(WarpProfile::FlatBand { half_width: 1.0 }, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let th = unit(&c, [0.0, 0.0], [1.0, 0.0]);
        let r = detect_strip(&c, &th, 2.5, &StripOptions::default()).unwrap();
        assert!((r.width - 2.0).abs() < 0.05 && !r.exceeded_window, "{} {:?}", r.width, r.endpoints);
        let mut e = r.endpoints;
        e.sort_by(|a, b| a[1].partial_cmp(&b[1]).unwrap());
        assert!(e[0][0].abs() < 0.05 && (e[0][1] + 1.0).abs() < 0.05);
        assert!(e[1][0].abs() < 0.05 && (e[1][1] - 1.0).abs() < 0.05);
    }

    #[test]
    fn hyperbolic_strip_is_trivial() {
        let c = MetricChart::constant(-1.0, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let th = unit(&c, [0.3, -0.4], [0.6, 0.8]);
        let r = detect_strip(&c, &th, 2.5, &StripOptions::default()).unwrap();
        assert!(r.width <= 2e-3 && !r.exceeded_window, "{r:?}");
    }

    #[test]
    fn flat_strip_exceeds() {
        let c = MetricChart::constant(0.0, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let th = unit(&c, [0.0, 0.0], [1.0, 0.0]);
        let r = detect_strip(&c, &th, 1.0, &StripOptions::default()).unwrap();
        assert!(r.exceeded_window && r.width >= 2.0 - 0.1);
    }
}
