//! Two-point boundary value problem by Newton shooting on (initial angle, length).
//!
//! The first iterations run the adaptive integrator. Once the iterate settles, the step
//! sequence is frozen (in units of the length) so the endpoint map is a smooth function of
//! the unknowns and Newton can converge to the floating-point resolution of the problem.

use crate::error::{GeoError, Result};
use crate::metric::MetricChart;
use crate::ode::{Dopri5, StepControl};
use crate::scalar::{wrap_angle, Real};

use super::geodesic_rhs;

/// Options of [`distance_bvp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions<S> {
    pub max_iter: usize,
    /// Residual target `|endpoint - q|_g`.
    pub tol: S,
    pub ctrl: StepControl<S>,
    /// Initial `(frame angle, length)` replacing the straight-chord guess.
    pub warm_start: Option<(S, S)>,
}

impl<S: Real> Default for ShootingOptions<S> {
    fn default() -> Self {
        Self {
            max_iter: 80,
            tol: S::floor_tol(S::lit(1e-9)),
            ctrl: StepControl::default().with_tol(S::lit(1e-12)).with_max_step(S::lit(0.05)),
            warm_start: None,
        }
    }
}

/// Connecting geodesic from `p` to `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpSolution<S> {
    pub distance: S,
    /// Unit chart direction at `p`.
    pub dir: [S; 2],
    /// Orthonormal-frame angle of `dir`.
    pub angle: S,
    pub residual: S,
    pub iterations: usize,
}

struct Shooter<'a, S: Real> {
    chart: &'a MetricChart<S>,
    p: [S; 2],
    q: [S; 2],
    ctrl: StepControl<S>,
}

impl<S: Real> Shooter<'_, S> {
    fn start(&self, alpha: S) -> [S; 4] {
        let d = self.chart.direction_from_angle(self.p, alpha);
        [self.p[0], self.p[1], d[0], d[1]]
    }

    /// Endpoint state after length `len`; on a frozen grid when `grid` is given.
    fn shoot(&self, alpha: S, len: S, grid: Option<&[S]>) -> Result<[S; 4]> {
        let rhs = geodesic_rhs(self.chart);
        let mut ode = Dopri5::new(&rhs, S::zero(), self.start(alpha), self.ctrl);
        match grid {
            Some(g) => {
                let mut prev = S::zero();
                for &s in g {
                    let h = (s - prev) * len;
                    prev = s;
                    ode.step_fixed(&rhs, h);
                    let y = self.project(*ode.y())?;
                    ode.set_state(&rhs, y);
                }
            }
            None => {
                while ode.t() != len {
                    ode.advance(&rhs, len)?;
                    let y = self.project(*ode.y())?;
                    ode.set_state(&rhs, y);
                }
            }
        }
        Ok(*ode.y())
    }

    fn project(&self, y: [S; 4]) -> Result<[S; 4]> {
        let n = self.chart.metric_norm([y[0], y[1]], [y[2], y[3]]);
        if !self.chart.in_domain([y[0], y[1]]) || !(n > S::zero()) || !n.is_finite() {
            return Err(GeoError::Integration { t: 0.0, reason: "shooting left the metric domain".into() });
        }
        Ok([y[0], y[1], y[2] / n, y[3] / n])
    }

    /// Normalized step times (in `(0, 1]`) of an adaptive run.
    fn grid(&self, alpha: S, len: S) -> Result<Vec<S>> {
        let rhs = geodesic_rhs(self.chart);
        let mut ode = Dopri5::new(&rhs, S::zero(), self.start(alpha), self.ctrl);
        let mut out = Vec::new();
        while ode.t() != len {
            ode.advance(&rhs, len)?;
            let y = self.project(*ode.y())?;
            ode.set_state(&rhs, y);
            out.push(ode.t() / len);
        }
        if let Some(last) = out.last_mut() {
            *last = S::one();
        }
        Ok(out)
    }

    fn miss(&self, e: &[S; 4]) -> [S; 2] {
        [e[0] - self.q[0], e[1] - self.q[1]]
    }

    fn residual(&self, e: &[S; 4]) -> S {
        self.chart.metric_norm(self.q, self.miss(e))
    }
}

/// Geodesic distance from `p` to `q` and the initial unit direction at `p`.
///
/// Shooting on `(α, L)`: `∂E/∂L` is the endpoint velocity, `∂E/∂α` a central difference.
/// Converges when `|E - q|_g ≤ tol`, or when the residual stagnates at the resolution
/// floor set by the conditioning `‖∂E/∂α‖` of the endpoint map and the number of steps.
/// A failed cold start falls back to continuation along the chart segment from `p` to `q`.
pub fn distance_bvp<S: Real>(
    chart: &MetricChart<S>,
    p: [S; 2],
    q: [S; 2],
    opts: &ShootingOptions<S>,
) -> Result<BvpSolution<S>> {
    if !chart.in_domain(p) || !chart.in_domain(q) {
        return Err(GeoError::Domain("boundary point outside the metric domain".into()));
    }
    let first = newton(chart, p, q, opts);
    if first.is_ok() || opts.warm_start.is_some() {
        return first;
    }
    continuation(chart, p, q, opts).map_err(|_| first.unwrap_err())
}

/// Smallest continuation increment before giving up.
const MIN_CONTINUATION_STEP: f64 = 1.0 / 4096.0;

fn continuation<S: Real>(
    chart: &MetricChart<S>,
    p: [S; 2],
    q: [S; 2],
    opts: &ShootingOptions<S>,
) -> Result<BvpSolution<S>> {
    let at = |lam: S| [p[0] + lam * (q[0] - p[0]), p[1] + lam * (q[1] - p[1])];
    let mut lam = S::zero();
    let mut dl = S::lit(0.125);
    let mut warm: Option<(S, S)> = None;
    loop {
        let next = (lam + dl).min(S::one());
        let mut o = *opts;
        o.warm_start = warm.map(|(a, l)| (a, l * next / lam));
        match newton(chart, p, at(next), &o) {
            Ok(sol) => {
                if next == S::one() {
                    return Ok(sol);
                }
                warm = Some((sol.angle, sol.distance));
                lam = next;
                dl = dl + dl;
            }
            Err(e) => {
                dl = dl * S::lit(0.5);
                if dl < S::lit(MIN_CONTINUATION_STEP) {
                    return Err(e);
                }
            }
        }
    }
}

fn newton<S: Real>(
    chart: &MetricChart<S>,
    p: [S; 2],
    q: [S; 2],
    opts: &ShootingOptions<S>,
) -> Result<BvpSolution<S>> {
    let sh = Shooter { chart, p, q, ctrl: opts.ctrl };
    if p == q {
        let dir = chart.direction_from_angle(p, S::zero());
        return Ok(BvpSolution { distance: S::zero(), dir, angle: S::zero(), residual: S::zero(), iterations: 0 });
    }
    let chord = [q[0] - p[0], q[1] - p[1]];
    let (mut alpha, mut len) = opts
        .warm_start
        .unwrap_or_else(|| (chart.frame_angle(p, chord), chart.chord_length(p, q)));
    len = len.max(S::epsilon());
    let eps = S::epsilon();
    let fd = S::lit(1e-6);
    let mut grid: Option<(Vec<S>, S, S)> = None;
    let mut end = sh.shoot(alpha, len, None)?;
    let mut res = sh.residual(&end);
    let mut floor = S::zero();
    for it in 0..opts.max_iter {
        // Freeze the step grid once the iterate is close.
        let near = res < S::lit(1e-4) * (S::one() + len);
        let rebuild = match &grid {
            None => near,
            Some((_, a0, l0)) => (len - *l0).abs() > S::lit(0.05) * *l0 || (alpha - *a0).abs() > S::lit(0.05),
        };
        if rebuild {
            grid = Some((sh.grid(alpha, len)?, alpha, len));
            end = sh.shoot(alpha, len, grid.as_ref().map(|g| g.0.as_slice()))?;
            res = sh.residual(&end);
        }
        if res <= opts.tol {
            return Ok(solution(chart, p, alpha, len, res, it));
        }
        let g = grid.as_ref().map(|g| g.0.as_slice());
        let ep = sh.shoot(alpha + fd, len, g)?;
        let em = sh.shoot(alpha - fd, len, g)?;
        let ja = [(ep[0] - em[0]) / (fd + fd), (ep[1] - em[1]) / (fd + fd)];
        let jl = [end[2], end[3]];
        // rounding in α and in every step is amplified by the conditioning of the map
        let steps = S::from_usize_lossy(grid.as_ref().map_or(1, |g| g.0.len()));
        let scale = chart.metric_norm(q, ja) * (S::one() + alpha.abs() + steps)
            + len
            + chart.metric_norm(q, [q[0].abs(), q[1].abs()]);
        floor = S::lit(16.0) * eps * scale;
        let m = sh.miss(&end);
        let det = ja[0] * jl[1] - ja[1] * jl[0];
        if det == S::zero() || !det.is_finite() {
            break;
        }
        let mut da = -(m[0] * jl[1] - m[1] * jl[0]) / det;
        let mut dl = -(ja[0] * m[1] - ja[1] * m[0]) / det;
        let cap = S::lit(0.5);
        if da.abs() > cap {
            dl = dl * cap / da.abs();
            da = da.signum() * cap;
        }
        let half = S::lit(0.5);
        if dl < -half * len {
            let f = -half * len / dl;
            dl = dl * f;
            da = da * f;
        }
        let mut lambda = S::one();
        let mut improved = false;
        for _ in 0..40 {
            let a1 = alpha + lambda * da;
            let l1 = len + lambda * dl;
            if let Ok(e1) = sh.shoot(a1, l1, g) {
                let r1 = sh.residual(&e1);
                if r1.is_finite() && r1 < res {
                    alpha = a1;
                    len = l1;
                    end = e1;
                    res = r1;
                    improved = true;
                    break;
                }
            }
            lambda = lambda * half;
        }
        if !improved {
            break;
        }
    }
    if res <= opts.tol.max(floor) && grid.is_some() {
        return Ok(solution(chart, p, alpha, len, res, opts.max_iter));
    }
    Err(GeoError::Shooting { iterations: opts.max_iter, residual: res.to_f64_lossy() })
}

fn solution<S: Real>(chart: &MetricChart<S>, p: [S; 2], alpha: S, len: S, res: S, it: usize) -> BvpSolution<S> {
    let angle = wrap_angle(alpha);
    BvpSolution { distance: len, dir: chart.direction_from_angle(p, angle), angle, residual: res, iterations: it }
}
