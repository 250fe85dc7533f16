//! Unit-speed geodesics on a chart: integration, sampled trajectories, Sasaki distances,
//! the two-point boundary value problem and the quasi-geodesic test.

mod quasi;
mod shooting;

pub use quasi::{quasi_geodesic_check, QuasiGeodesicReport};
pub use shooting::{distance_bvp, BvpSolution, ShootingOptions};

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::metric::MetricChart;
use crate::ode::{hermite5, Dopri5, StepControl, StepStats};
use crate::scalar::{wrap_angle, Real};

/// Unit-norm tolerance before a direction is renormalized.
pub const UNIT_TOL: f64 = 1e-9;

/// A point of the unit tangent bundle: chart base point and a direction of unit `g`-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitTangentVector<S> {
    pub base: [S; 2],
    pub dir: [S; 2],
}

impl<S: Real> UnitTangentVector<S> {
    /// Normalizes `dir` to unit `g`-norm at `base` when it is off by more than `1e-9`.
    pub fn new(chart: &MetricChart<S>, base: [S; 2], dir: [S; 2]) -> Result<Self> {
        if !chart.in_domain(base) {
            return Err(GeoError::Domain("base point outside the metric domain".into()));
        }
        let n = chart.metric_norm(base, dir);
        if !(n > S::zero()) || !n.is_finite() {
            return Err(GeoError::Domain("direction must be nonzero and finite".into()));
        }
        let dir = if (n - S::one()).abs() > S::lit(UNIT_TOL) { [dir[0] / n, dir[1] / n] } else { dir };
        Ok(Self { base, dir })
    }

    /// Direction at orthonormal-frame angle `angle`.
    pub fn from_angle(chart: &MetricChart<S>, base: [S; 2], angle: S) -> Result<Self> {
        Self::new(chart, base, chart.direction_from_angle(base, angle))
    }

    pub fn from_state(chart: &MetricChart<S>, state: [S; 4]) -> Result<Self> {
        Self::new(chart, [state[0], state[1]], [state[2], state[3]])
    }

    pub fn reversed(&self) -> Self {
        Self { base: self.base, dir: [-self.dir[0], -self.dir[1]] }
    }

    pub fn state(&self) -> [S; 4] {
        [self.base[0], self.base[1], self.dir[0], self.dir[1]]
    }

    pub fn angle(&self, chart: &MetricChart<S>) -> S {
        chart.frame_angle(self.base, self.dir)
    }
}

/// One trajectory node: time, state `(x, y, vx, vy)`, chart acceleration and curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicSample<S> {
    pub t: S,
    pub state: [S; 4],
    pub accel: [S; 2],
    pub curvature: S,
}

/// Step-size and speed-drift diagnostics of a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrajectoryStats<S> {
    pub steps: StepStats<S>,
    /// Largest `| ‖v‖_g - 1 |` observed before renormalization.
    pub max_speed_drift: S,
}

/// A sampled unit-speed geodesic.
#[derive(Debug, Clone)]
pub struct GeodesicTrajectory<S> {
    pub chart: MetricChart<S>,
    pub theta0: UnitTangentVector<S>,
    pub samples: Vec<GeodesicSample<S>>,
    /// The requested span was cut short because the geodesic left the padded window.
    pub truncated: bool,
    pub stats: TrajectoryStats<S>,
}

pub(crate) fn geodesic_rhs<S: Real>(chart: &MetricChart<S>) -> impl Fn(S, &[S; 4]) -> [S; 4] + '_ {
    move |_t, s| {
        let a = chart.geodesic_acceleration([s[0], s[1]], [s[2], s[3]]);
        [s[2], s[3], a[0], a[1]]
    }
}

fn renormalize<S: Real>(chart: &MetricChart<S>, s: [S; 4]) -> ([S; 4], S) {
    let n = chart.metric_norm([s[0], s[1]], [s[2], s[3]]);
    ([s[0], s[1], s[2] / n, s[3] / n], (n - S::one()).abs())
}

fn sample_of<S: Real>(chart: &MetricChart<S>, t: S, state: [S; 4], f: &[S; 4]) -> GeodesicSample<S> {
    GeodesicSample { t, state, accel: [f[2], f[3]], curvature: chart.curvature([state[0], state[1]]) }
}

struct HalfRun<S> {
    samples: Vec<GeodesicSample<S>>,
    truncated: bool,
    stats: StepStats<S>,
    drift: S,
}

fn run_half<S: Real>(
    chart: &MetricChart<S>,
    theta0: &UnitTangentVector<S>,
    t_end: S,
    ctrl: StepControl<S>,
    bounds: Option<crate::metric::Window<S>>,
) -> Result<HalfRun<S>> {
    let rhs = geodesic_rhs(chart);
    let mut ode = Dopri5::new(&rhs, S::zero(), theta0.state(), ctrl);
    let mut samples = vec![sample_of(chart, S::zero(), *ode.y(), ode.dydt())];
    let mut drift = S::zero();
    let mut truncated = false;
    while ode.t() != t_end {
        ode.advance(&rhs, t_end)?;
        let (y, d) = renormalize(chart, *ode.y());
        drift = drift.max(d);
        ode.set_state(&rhs, y);
        let pos = [y[0], y[1]];
        if !chart.in_domain(pos) {
            return Err(GeoError::Integration { t: ode.t().to_f64_lossy(), reason: "left the metric domain".into() });
        }
        samples.push(sample_of(chart, ode.t(), y, ode.dydt()));
        if let Some(b) = bounds {
            if !b.contains(pos) {
                truncated = true;
                break;
            }
        }
    }
    Ok(HalfRun { samples, truncated, stats: ode.stats(), drift })
}

/// Integrates the geodesic through `theta0` over `t_span = [t−, t+]` (with `t− ≤ 0 ≤ t+`).
///
/// The trajectory must stay in the chart window padded by `max(|t−|, |t+|)`; if it leaves,
/// the samples up to the exit are kept and the result is flagged `truncated`.
pub fn integrate_geodesic<S: Real>(
    chart: &MetricChart<S>,
    theta0: &UnitTangentVector<S>,
    t_span: (S, S),
    ctrl: StepControl<S>,
) -> Result<GeodesicTrajectory<S>> {
    let (t_lo, t_hi) = t_span;
    if !(t_lo.is_finite() && t_hi.is_finite()) || t_lo > S::zero() || t_hi < S::zero() {
        return Err(GeoError::Precondition("t_span must be finite and contain 0".into()));
    }
    let theta0 = UnitTangentVector::new(chart, theta0.base, theta0.dir)?;
    let pad = t_lo.abs().max(t_hi.abs());
    let bounds = Some(chart.window.padded(pad));
    let fwd = run_half(chart, &theta0, t_hi, ctrl, bounds)?;
    let mut samples;
    let mut truncated = fwd.truncated;
    let mut steps = fwd.stats;
    let mut drift = fwd.drift;
    if t_lo < S::zero() {
        let bwd = run_half(chart, &theta0, t_lo, ctrl, bounds)?;
        truncated |= bwd.truncated;
        steps.accepted += bwd.stats.accepted;
        steps.rejected += bwd.stats.rejected;
        steps.min_step = steps.min_step.min(bwd.stats.min_step);
        steps.max_step = steps.max_step.max(bwd.stats.max_step);
        drift = drift.max(bwd.drift);
        samples = bwd.samples;
        samples.reverse();
        samples.pop();
        samples.extend(fwd.samples);
    } else {
        samples = fwd.samples;
    }
    Ok(GeodesicTrajectory {
        chart: *chart,
        theta0,
        samples,
        truncated,
        stats: TrajectoryStats { steps, max_speed_drift: drift },
    })
}

impl<S: Real> GeodesicTrajectory<S> {
    /// Rebuilds a trajectory from stored `(t, state)` nodes (e.g. a cache file).
    pub fn from_nodes(
        chart: &MetricChart<S>,
        theta0: UnitTangentVector<S>,
        nodes: &[(S, [S; 4])],
        truncated: bool,
    ) -> Result<Self> {
        if nodes.is_empty() || nodes.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(GeoError::Precondition("trajectory nodes must be nonempty and strictly increasing".into()));
        }
        let rhs = geodesic_rhs(chart);
        let samples = nodes
            .iter()
            .map(|&(t, s)| {
                let f = rhs(t, &s);
                sample_of(chart, t, s, &f)
            })
            .collect();
        Ok(Self { chart: *chart, theta0, samples, truncated, stats: TrajectoryStats::default() })
    }

    /// The trajectory of the reversed vector: `t ↦ -t` with velocities negated.
    pub fn reversed(&self) -> Self {
        let samples = self
            .samples
            .iter()
            .rev()
            .map(|s| GeodesicSample {
                t: -s.t,
                state: [s.state[0], s.state[1], -s.state[2], -s.state[3]],
                accel: s.accel,
                curvature: s.curvature,
            })
            .collect();
        Self { chart: self.chart, theta0: self.theta0.reversed(), samples, truncated: self.truncated, stats: self.stats }
    }

    pub fn t_min(&self) -> S {
        self.samples[0].t
    }

    pub fn t_max(&self) -> S {
        self.samples[self.samples.len() - 1].t
    }

    pub fn covers(&self, t0: S, t1: S) -> bool {
        let (a, b) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        a >= self.t_min() && b <= self.t_max()
    }

    pub fn end(&self) -> UnitTangentVector<S> {
        let s = self.samples[self.samples.len() - 1].state;
        UnitTangentVector { base: [s[0], s[1]], dir: [s[2], s[3]] }
    }

    fn segment(&self, t: S) -> Option<usize> {
        if !(t >= self.t_min() && t <= self.t_max()) {
            return None;
        }
        let i = self.samples.partition_point(|s| s.t <= t);
        Some(i.saturating_sub(1).min(self.samples.len().saturating_sub(2)))
    }

    /// State `(x, y, vx, vy)` at time `t` by quintic Hermite interpolation of the nodes.
    pub fn state_at(&self, t: S) -> Option<[S; 4]> {
        if self.samples.len() == 1 {
            return (t == self.t_min()).then(|| self.samples[0].state);
        }
        let i = self.segment(t)?;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let (x, vx) = hermite5(a.t, a.state[0], a.state[2], a.accel[0], b.t, b.state[0], b.state[2], b.accel[0], t);
        let (y, vy) = hermite5(a.t, a.state[1], a.state[3], a.accel[1], b.t, b.state[1], b.state[3], b.accel[1], t);
        Some([x, y, vx, vy])
    }

    pub fn position_at(&self, t: S) -> Option<[S; 2]> {
        self.state_at(t).map(|s| [s[0], s[1]])
    }

    /// `φ_t(θ₀)` as a unit vector (direction renormalized after interpolation).
    pub fn vector_at(&self, t: S) -> Option<UnitTangentVector<S>> {
        let s = self.state_at(t)?;
        let (s, _) = renormalize(&self.chart, s);
        Some(UnitTangentVector { base: [s[0], s[1]], dir: [s[2], s[3]] })
    }

    /// Curvature along the geodesic at time `t` (interpolated base point).
    pub fn curvature_at_time(&self, t: S) -> Option<S> {
        self.position_at(t).map(|p| self.chart.curvature(p))
    }
}

/// Flows `theta` for time `t` (either sign) and returns the final state.
pub fn flow_endpoint<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    t: S,
    ctrl: StepControl<S>,
) -> Result<[S; 4]> {
    let rhs = geodesic_rhs(chart);
    let mut ode = Dopri5::new(&rhs, S::zero(), theta.state(), ctrl);
    while ode.t() != t {
        ode.advance(&rhs, t)?;
        let (y, _) = renormalize(chart, *ode.y());
        if !chart.in_domain([y[0], y[1]]) {
            return Err(GeoError::Integration { t: ode.t().to_f64_lossy(), reason: "left the metric domain".into() });
        }
        ode.set_state(&rhs, y);
    }
    Ok(*ode.y())
}

/// Flows `theta` and returns the states at the requested nonnegative, nondecreasing times.
/// `None` marks the geodesic leaving `bounds` before the time was reached.
pub fn flow_samples<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    times: &[S],
    ctrl: StepControl<S>,
    bounds: Option<crate::metric::Window<S>>,
) -> Result<Vec<Option<[S; 4]>>> {
    let rhs = geodesic_rhs(chart);
    let mut ode = Dopri5::new(&rhs, S::zero(), theta.state(), ctrl);
    let mut out = Vec::with_capacity(times.len());
    let mut prev = (ode.t(), *ode.y(), *ode.dydt());
    let mut alive = true;
    for &target in times {
        if target < S::zero() {
            return Err(GeoError::Precondition("flow_samples expects nonnegative times".into()));
        }
        while alive && ode.t() < target {
            ode.advance(&rhs, target)?;
            let (y, _) = renormalize(chart, *ode.y());
            ode.set_state(&rhs, y);
            let pos = [y[0], y[1]];
            if !chart.in_domain(pos) || bounds.is_some_and(|b| !b.contains(pos)) {
                alive = false;
            }
            prev = if ode.t() >= target { prev } else { (ode.t(), y, *ode.dydt()) };
            if ode.t() >= target {
                break;
            }
        }
        if !alive {
            out.push(None);
            continue;
        }
        if ode.t() == target {
            out.push(Some(*ode.y()));
        } else {
            // target lies between `prev` and the current node
            let (t0, y0, f0) = prev;
            let (t1, y1, f1) = (ode.t(), *ode.y(), *ode.dydt());
            let (x, vx) = hermite5(t0, y0[0], y0[2], f0[2], t1, y1[0], y1[2], f1[2], target);
            let (y, vy) = hermite5(t0, y0[1], y0[3], f0[3], t1, y1[1], y1[3], f1[3], target);
            out.push(Some([x, y, vx, vy]));
        }
        prev = (ode.t(), *ode.y(), *ode.dydt());
    }
    Ok(out)
}

/// Angle between two unit vectors after expressing each in the orthonormal frame of its
/// own base point.
pub fn frame_angle_between<S: Real>(chart: &MetricChart<S>, a: &UnitTangentVector<S>, b: &UnitTangentVector<S>) -> S {
    wrap_angle(b.angle(chart) - a.angle(chart)).abs()
}

/// Sasaki-type distance `√(d_g(base_a, base_b)² + ∠²)` with the base distance from the
/// boundary value solver.
pub fn sasaki_distance<S: Real>(
    chart: &MetricChart<S>,
    a: &UnitTangentVector<S>,
    b: &UnitTangentVector<S>,
) -> Result<S> {
    let angle = frame_angle_between(chart, a, b);
    let base = if a.base == b.base {
        S::zero()
    } else {
        distance_bvp(chart, a.base, b.base, &ShootingOptions::default())?.distance
    };
    Ok(base.hypot(angle))
}

/// Local variant of [`sasaki_distance`]: the base distance is the midpoint-metric chord
/// length, accurate to third order for nearby points. Used for ε-scale comparisons.
pub fn sasaki_distance_local<S: Real>(
    chart: &MetricChart<S>,
    a: &UnitTangentVector<S>,
    b: &UnitTangentVector<S>,
) -> S {
    chart.chord_length(a.base, b.base).hypot(frame_angle_between(chart, a, b))
}

/// [`sasaki_distance_local`] on raw states.
pub fn sasaki_local_states<S: Real>(chart: &MetricChart<S>, a: &[S; 4], b: &[S; 4]) -> S {
    let pa = [a[0], a[1]];
    let pb = [b[0], b[1]];
    let angle = wrap_angle(chart.frame_angle(pb, [b[2], b[3]]) - chart.frame_angle(pa, [a[2], a[3]])).abs();
    chart.chord_length(pa, pb).hypot(angle)
}
