//! Busemann functions, horocycle traces, strip detection and bi-asymptotic distances.
//!
//! `b⁺_θ(x) = lim d(x, γ_θ(T)) - T` is evaluated on doubling horizons. In negative curvature
//! the truncation error decays exponentially and the raw values are used. Along flat
//! stretches it decays like `1/T`, and the sequence is Romberg-extrapolated in `1/T`.
//! `b⁻_θ` is `b⁺` of the reversed vector.

mod biasymptotic;
mod trace;

pub use biasymptotic::{biasymptotic_distance, BiasymptoticReport, Verdict};
pub(crate) use trace::trace_leaf;
pub use trace::{
    detect_strip, leaf_tangency, trace_horocycle, HorocycleTrace, LeafTangency, StripOptions, StripRecord,
    TraceOptions, TracePoint,
};

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geodesic::{distance_bvp, ShootingOptions, UnitTangentVector};
use crate::metric::MetricChart;
use crate::ode::{Dopri5, StepControl};
use crate::scalar::{wrap_angle, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

/// The ray `γ` with `b = lim d(·, γ(T)) - T`.
fn ray_of<S: Real>(theta: &UnitTangentVector<S>, sign: Sign) -> UnitTangentVector<S> {
    match sign {
        Sign::Plus => *theta,
        Sign::Minus => theta.reversed(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusemannOptions<S> {
    /// Acceptance threshold on the last decrement (or extrapolation change).
    pub tol: S,
    /// Largest horizon; horizons are the powers of two up to it.
    pub t_max: S,
    pub shooting: ShootingOptions<S>,
}

impl<S: Real> Default for BusemannOptions<S> {
    fn default() -> Self {
        Self { tol: S::lit(1e-5), t_max: S::lit(256.0), shooting: ShootingOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusemannEstimate<S> {
    pub theta: UnitTangentVector<S>,
    pub point: [S; 2],
    pub sign: Sign,
    pub value: S,
    /// Chart components of `∇b` (unit `g`-norm).
    pub gradient: [S; 2],
    pub t_used: S,
    pub decrement_last: S,
    pub converged: bool,
    /// `b_T` nonincreasing in `T` up to the solver accuracy.
    pub monotone: bool,
    /// The `1/T` model was recognized and the extrapolated value returned.
    pub algebraic: bool,
    /// `(T, b_T)` as computed.
    pub sequence: Vec<(S, S)>,
}

/// Slack on the monotonicity of the truncations, on top of the boundary value residuals.
const MONOTONE_SLACK: f64 = 1e-8;

/// Highest Romberg order used on `1/T` sequences.
const ROMBERG_ORDER: usize = 3;

/// Romberg table on values at doubling horizons; returns the estimate of the last row at
/// order `min(order, n - 1)`.
pub(crate) fn romberg<S: Real>(values: &[S], order: usize) -> S {
    let n = values.len();
    let mut row: Vec<S> = values.to_vec();
    let m = order.min(n.saturating_sub(1));
    let mut pow = S::one();
    for _ in 0..m {
        pow = pow + pow;
        let next: Vec<S> = row.windows(2).map(|w| w[1] + (w[1] - w[0]) / (pow - S::one())).collect();
        row = next;
    }
    row[row.len() - 1]
}

/// Whether the last two differences of a doubling sequence shrink like `1/T`.
pub(crate) fn looks_algebraic<S: Real>(values: &[S]) -> bool {
    let n = values.len();
    if n < 3 {
        return false;
    }
    let d1 = values[n - 1] - values[n - 2];
    let d0 = values[n - 2] - values[n - 3];
    if d0 == S::zero() {
        return false;
    }
    let q = (d1 / d0) / S::lit(0.5);
    q >= S::lit(0.5) && q <= S::lit(2.0)
}

fn unwrap_angles<S: Real>(angles: &[S]) -> Vec<S> {
    let last = angles[angles.len() - 1];
    angles.iter().map(|&a| last + wrap_angle(a - last)).collect()
}

/// Chart point `γ(T)` of a ray, advanced lazily through increasing horizons.
pub(crate) struct RayWalker<'a, S: Real> {
    chart: &'a MetricChart<S>,
    t: S,
    y: [S; 4],
}

impl<'a, S: Real> RayWalker<'a, S> {
    pub(crate) fn new(chart: &'a MetricChart<S>, ray: &UnitTangentVector<S>) -> Self {
        Self { chart, t: S::zero(), y: ray.state() }
    }

    pub(crate) fn point_at(&mut self, t: S) -> Result<[S; 2]> {
        if t < self.t {
            return Err(GeoError::Precondition("ray horizons must increase".into()));
        }
        if t > self.t {
            let chart = self.chart;
            let rhs = crate::geodesic::geodesic_rhs(chart);
            let mut ode = Dopri5::new(&rhs, self.t, self.y, StepControl::default());
            while ode.t() != t {
                ode.advance(&rhs, t)?;
                let y = *ode.y();
                let n = chart.metric_norm([y[0], y[1]], [y[2], y[3]]);
                let y = [y[0], y[1], y[2] / n, y[3] / n];
                if !chart.in_domain([y[0], y[1]]) {
                    return Err(GeoError::Integration { t: t.to_f64_lossy(), reason: "ray left the metric domain".into() });
                }
                ode.set_state(&rhs, y);
            }
            self.t = t;
            self.y = *ode.y();
        }
        Ok([self.y[0], self.y[1]])
    }
}

/// Estimates `b^sign_θ(x)` by doubling horizons.
pub fn busemann<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    x: [S; 2],
    sign: Sign,
    opts: &BusemannOptions<S>,
) -> Result<BusemannEstimate<S>> {
    if !chart.window.contains(x) {
        return Err(GeoError::OutsideWindow { x: x[0].to_f64_lossy(), y: x[1].to_f64_lossy() });
    }
    busemann_unchecked(chart, theta, x, sign, opts)
}

pub(crate) fn busemann_unchecked<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    x: [S; 2],
    sign: Sign,
    opts: &BusemannOptions<S>,
) -> Result<BusemannEstimate<S>> {
    let ray = ray_of(theta, sign);
    let mut walker = RayWalker::new(chart, &ray);
    let mut seq: Vec<(S, S)> = Vec::new();
    let mut angles: Vec<S> = Vec::new();
    let mut residuals: Vec<S> = Vec::new();
    let mut warm: Option<(S, S)> = None;
    let mut horizon = S::one();
    let mut out: Option<(S, S, S, bool, bool)> = None; // value, angle, change, algebraic, converged
    while horizon <= opts.t_max {
        let target = walker.point_at(horizon)?;
        let mut so = opts.shooting;
        so.warm_start = warm.map(|(a, l)| (a, l + horizon * S::lit(0.5)));
        let attempt = distance_bvp(chart, x, target, &so).or_else(|_| {
            so.warm_start = None;
            distance_bvp(chart, x, target, &so)
        });
        let sol = match attempt {
            Ok(s) => s,
            Err(e) if seq.len() < 2 => return Err(e),
            Err(_) => break,
        };
        warm = Some((sol.angle, sol.distance));
        seq.push((horizon, sol.distance - horizon));
        residuals.push(sol.residual);
        // ∇b = minus the direction toward γ(T)
        angles.push(wrap_angle(sol.angle + S::PI()));
        let values: Vec<S> = seq.iter().map(|s| s.1).collect();
        let n = values.len();
        let raw_change = if n >= 2 { (values[n - 1] - values[n - 2]).abs() } else { S::infinity() };
        if raw_change < opts.tol {
            out = Some((values[n - 1], angles[n - 1], raw_change, false, true));
            break;
        }
        if looks_algebraic(&values) {
            let ua = unwrap_angles(&angles);
            let est = romberg(&values, ROMBERG_ORDER);
            let prev = romberg(&values[..n - 1], ROMBERG_ORDER);
            let change = (est - prev).abs();
            out = Some((est, romberg(&ua, ROMBERG_ORDER), change, true, change < opts.tol));
            if change < opts.tol {
                break;
            }
        } else {
            out = Some((values[n - 1], angles[n - 1], raw_change, false, false));
        }
        horizon = horizon + horizon;
    }
    let (value, angle, change, algebraic, converged) =
        out.ok_or_else(|| GeoError::Precondition("Busemann horizon t_max must be at least 1".into()))?;
    let monotone = seq
        .windows(2)
        .zip(residuals.windows(2))
        .all(|(w, r)| w[1].1 <= w[0].1 + S::lit(MONOTONE_SLACK) + r[0] + r[1]);
    Ok(BusemannEstimate {
        theta: *theta,
        point: x,
        sign,
        value,
        gradient: chart.direction_from_angle(x, angle),
        t_used: seq.last().map(|s| s.0).unwrap_or_else(S::zero),
        decrement_last: change,
        converged,
        monotone,
        algebraic,
        sequence: seq,
    })
}

/// Busemann function frozen at the horizons chosen by probing, for repeated evaluation
/// along a curve (boundary value solves are warm-started from the previous point).
#[derive(Debug, Clone)]
pub struct BusemannField<S> {
    pub chart: MetricChart<S>,
    pub theta: UnitTangentVector<S>,
    pub sign: Sign,
    pub horizons: Vec<S>,
    pub algebraic: bool,
    targets: Vec<[S; 2]>,
    warm: Vec<Option<(S, S)>>,
    shooting: ShootingOptions<S>,
}

impl<S: Real> BusemannField<S> {
    /// Probes the full estimator at `probes` and keeps the largest horizon needed (the last
    /// four doubling horizons in the `1/T` regime, for Romberg extrapolation).
    pub fn probed(
        chart: &MetricChart<S>,
        theta: &UnitTangentVector<S>,
        sign: Sign,
        probes: &[[S; 2]],
        opts: &BusemannOptions<S>,
    ) -> Result<Self> {
        let mut t_used = S::one();
        let mut algebraic = false;
        for &p in probes {
            let e = busemann_unchecked(chart, theta, p, sign, opts)?;
            t_used = t_used.max(e.t_used);
            algebraic |= e.algebraic;
        }
        let horizons = if algebraic {
            let mut hs = vec![t_used];
            while hs.len() <= ROMBERG_ORDER && hs[0] > S::one() {
                hs.insert(0, hs[0] * S::lit(0.5));
            }
            hs
        } else {
            vec![t_used]
        };
        Self::with_horizons(chart, theta, sign, horizons, algebraic, opts.shooting)
    }

    pub fn with_horizons(
        chart: &MetricChart<S>,
        theta: &UnitTangentVector<S>,
        sign: Sign,
        horizons: Vec<S>,
        algebraic: bool,
        shooting: ShootingOptions<S>,
    ) -> Result<Self> {
        let ray = ray_of(theta, sign);
        let mut walker = RayWalker::new(chart, &ray);
        let targets = horizons.iter().map(|&h| walker.point_at(h)).collect::<Result<Vec<_>>>()?;
        let warm = vec![None; horizons.len()];
        Ok(Self { chart: *chart, theta: *theta, sign, horizons, algebraic, targets, warm, shooting })
    }

    /// `(b(x), ∇b(x))` with the gradient as a unit chart vector.
    pub fn eval(&mut self, x: [S; 2]) -> Result<(S, [S; 2])> {
        let mut values = Vec::with_capacity(self.horizons.len());
        let mut angles = Vec::with_capacity(self.horizons.len());
        for (i, (&h, &q)) in self.horizons.iter().zip(&self.targets).enumerate() {
            let mut so = self.shooting;
            so.warm_start = self.warm[i];
            let sol = match distance_bvp(&self.chart, x, q, &so) {
                Ok(s) => s,
                Err(_) if so.warm_start.is_some() => {
                    so.warm_start = None;
                    distance_bvp(&self.chart, x, q, &so)?
                }
                Err(e) => return Err(e),
            };
            self.warm[i] = Some((sol.angle, sol.distance));
            values.push(sol.distance - h);
            angles.push(wrap_angle(sol.angle + S::PI()));
        }
        let (b, a) = if self.algebraic && values.len() > 1 {
            (romberg(&values, ROMBERG_ORDER), romberg(&unwrap_angles(&angles), ROMBERG_ORDER))
        } else {
            (values[values.len() - 1], angles[angles.len() - 1])
        };
        Ok((b, self.chart.direction_from_angle(x, a)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{WarpProfile, Window};

    #[test]
    fn flat_example() {
        let chart = MetricChart::constant(0.0, Window::<f64>::new(-10.0, 10.0, -10.0, 10.0)).unwrap();
        let th = UnitTangentVector::new(&chart, [0.0, 0.0], [0.0, 1.0]).unwrap();
        let e = busemann(&chart, &th, [3.0, 2.0], Sign::Plus, &BusemannOptions::default()).unwrap();
        assert!((e.value + 2.0).abs() < 1e-5, "{e:?}");
        assert!(e.algebraic && e.converged && e.monotone);
        assert!((e.gradient[0]).abs() < 1e-3 && (e.gradient[1] + 1.0).abs() < 1e-6, "{:?}", e.gradient);
    }

    #[test]
    fn horocyclic_example() {
        let chart = MetricChart::warped(WarpProfile::Exp { rate: 1.0 }, Window::<f64>::new(-6.0, 6.0, -2.0, 2.0)).unwrap();
        let th = UnitTangentVector::new(&chart, [0.0, 0.0], [0.0, 1.0]).unwrap();
        let e = busemann(&chart, &th, [5.0, 0.0], Sign::Plus, &BusemannOptions::default()).unwrap();
        assert!(e.value.abs() < 1e-4 && e.converged && e.monotone, "{e:?}");
    }

    #[test]
    fn point_on_ray() {
        let chart = MetricChart::constant(-1.0, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let th = UnitTangentVector::new(&chart, [0.0, 0.0], [0.6, 0.8]).unwrap();
        let p = crate::geodesic::flow_endpoint(&chart, &th, 2.0, StepControl::default()).unwrap();
        let e = busemann(&chart, &th, [p[0], p[1]], Sign::Plus, &BusemannOptions::default()).unwrap();
        assert!((e.value + 2.0).abs() < 1e-9, "{e:?}");
        for &(t, b) in &e.sequence {
            if t >= 2.0 {
                assert!((b + 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn romberg_kills_inverse_powers() {
        let vals: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&t| -2.0 + 3.0 / t - 1.0 / (t * t)).collect();
        assert!((romberg(&vals, 3) + 2.0).abs() < 1e-12);
        assert!(looks_algebraic(&[3.0, 1.5, 0.75f64]));
        assert!(!looks_algebraic(&[1.0, 0.1, 0.0001f64]));
    }
}
