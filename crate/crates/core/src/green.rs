//! Green frames, rank-one classification, Lyapunov exponents and the `√(1+κ²)` sandwich.

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geodesic::{integrate_geodesic, GeodesicTrajectory, UnitTangentVector};
use crate::jacobi::{
    check_span, curvature_fn, green_limit_on, integrate_jacobi_span, integrate_riccati, GreenLimit, U_CAP,
};
use crate::metric::MetricChart;
use crate::ode::{Dopri5, StepControl};
use crate::scalar::Real;

pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-4;

/// Options of the Green limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenOptions<S> {
    pub tol: S,
    pub t_max: S,
}

impl<S: Real> Default for GreenOptions<S> {
    fn default() -> Self {
        Self { tol: S::lit(crate::jacobi::DEFAULT_GREEN_TOL), t_max: S::lit(crate::jacobi::DEFAULT_T_MAX) }
    }
}

/// Stable and unstable Green data at a unit vector. Frames are `(j, j')` initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenData<S> {
    pub theta: UnitTangentVector<S>,
    pub u_s: S,
    pub u_u: S,
    pub gap: S,
    pub converged: bool,
    pub t_used: S,
    pub frame_s: [S; 2],
    pub frame_u: [S; 2],
}

impl<S: Real> GreenData<S> {
    pub fn from_limit(theta: UnitTangentVector<S>, g: &GreenLimit<S>) -> Self {
        Self {
            theta,
            u_s: g.u_s,
            u_u: g.u_u,
            gap: g.u_u - g.u_s,
            converged: g.converged,
            t_used: g.t_used,
            frame_s: [S::one(), g.u_s],
            frame_u: [S::one(), g.u_u],
        }
    }
}

/// Green data of `theta` (integrates the geodesic on `[-t_max, t_max]`).
pub fn green_frame<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    opts: &GreenOptions<S>,
) -> Result<GreenData<S>> {
    let traj = integrate_geodesic(chart, theta, (-opts.t_max, opts.t_max), StepControl::default())?;
    green_frame_on(&traj, opts)
}

/// Green data at `t = 0` of an existing trajectory.
pub fn green_frame_on<S: Real>(traj: &GeodesicTrajectory<S>, opts: &GreenOptions<S>) -> Result<GreenData<S>> {
    let g = green_limit_on(traj, opts.tol, opts.t_max)?;
    Ok(GreenData::from_limit(traj.theta0, &g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankClass {
    RankOne,
    Degenerate,
    Unresolved,
}

impl RankClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RankClass::RankOne => "rank_one",
            RankClass::Degenerate => "degenerate",
            RankClass::Unresolved => "unresolved",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification<S> {
    pub class: RankClass,
    pub gap: S,
    pub threshold: S,
}

/// `RankOne` iff `gap > threshold`; otherwise `Degenerate` when converged, else `Unresolved`.
pub fn classify_rank_one<S: Real>(green: &GreenData<S>, threshold: S) -> Classification<S> {
    let class = if green.gap > threshold {
        RankClass::RankOne
    } else if green.converged {
        RankClass::Degenerate
    } else {
        RankClass::Unresolved
    };
    Classification { class, gap: green.gap, threshold }
}

/// Finite-time Lyapunov exponent along the unstable Green solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate<S> {
    /// `(1/T) ∫₀^T u^u(φ_t θ) dt`.
    pub exponent: S,
    /// `(1/T) log j_u(T)` from the Jacobi solution with `(j, j')(0) = (1, u^u(0))`.
    pub log_growth: S,
    pub t: S,
}

/// Integrates `(u, ∫u)` forward from `u(0) = u0` on `[0, t]`.
pub fn riccati_average<S: Real>(traj: &GeodesicTrajectory<S>, u0: S, t: S) -> Result<S> {
    check_span(traj, S::zero(), t)?;
    let k = curvature_fn(traj);
    let rhs = |s: S, y: &[S; 2]| [-y[0] * y[0] - k(s), y[0]];
    let ctrl = StepControl::default().with_tol(S::lit(1e-12)).with_max_step(S::lit(0.05));
    let mut ode = Dopri5::new(&rhs, S::zero(), [u0, S::zero()], ctrl);
    while ode.t() != t {
        ode.advance(&rhs, t)?;
        if ode.y()[0].abs() > S::lit(U_CAP) {
            return Err(GeoError::ConjugatePoint { t: ode.t().to_f64_lossy() });
        }
    }
    Ok(ode.y()[1] / t)
}

/// Lyapunov exponent over `[0, t]` on a trajectory whose Green data is `green`.
pub fn lyapunov_on<S: Real>(traj: &GeodesicTrajectory<S>, green: &GreenData<S>, t: S) -> Result<LyapunovEstimate<S>> {
    if !green.converged {
        return Err(GeoError::Precondition("Lyapunov exponent needs converged Green data".into()));
    }
    if !(t > S::zero()) {
        return Err(GeoError::Precondition("Lyapunov horizon must be positive".into()));
    }
    let exponent = riccati_average(traj, green.u_u, t)?;
    let j = integrate_jacobi_span(traj, S::zero(), t, S::one(), green.u_u)?;
    let jt = j.j[j.j.len() - 1];
    let log_growth = if jt > S::zero() { jt.ln() / t } else { S::nan() };
    Ok(LyapunovEstimate { exponent, log_growth, t })
}

/// Lyapunov exponent of `theta` over `[0, t]`.
pub fn lyapunov_exponent<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    t: S,
    opts: &GreenOptions<S>,
) -> Result<LyapunovEstimate<S>> {
    let span = opts.t_max.max(t);
    let traj = integrate_geodesic(chart, theta, (-opts.t_max, span), StepControl::default())?;
    let green = green_frame_on(&traj, opts)?;
    lyapunov_on(&traj, &green, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichReport<S> {
    pub holds: bool,
    /// Largest `√(j² + j'²) / j = √(1 + u²)` along `[0, T]`.
    pub max_ratio: S,
    pub bound: S,
}

/// Checks `‖(j, j')‖ ≤ √(1+κ²) j` along the selected Green solution on `[0, t]`.
///
/// The unstable solution is integrated forward from `u^u(0)`; the stable one backward from
/// the stable limit at `φ_t θ`. Both directions are the numerically attracting ones.
pub fn sandwich_check<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    which: Which,
    t: S,
    opts: &GreenOptions<S>,
) -> Result<SandwichReport<S>> {
    if !(t > S::zero()) {
        return Err(GeoError::Precondition("sandwich horizon must be positive".into()));
    }
    let traj = integrate_geodesic(chart, theta, (-opts.t_max, t + opts.t_max), StepControl::default())?;
    let sol = match which {
        Which::Unstable => {
            let g = green_frame_on(&traj, opts)?;
            if !g.converged {
                return Err(GeoError::Precondition("sandwich check needs converged Green data".into()));
            }
            integrate_riccati(&traj, g.u_u, (S::zero(), t))?
        }
        Which::Stable => {
            let end = traj
                .vector_at(t)
                .ok_or_else(|| GeoError::Precondition("trajectory does not reach the horizon".into()))?;
            let far = integrate_geodesic(chart, &end, (-opts.t_max, opts.t_max), StepControl::default())?;
            let g = green_frame_on(&far, opts)?;
            if !g.converged {
                return Err(GeoError::Precondition("sandwich check needs converged Green data".into()));
            }
            integrate_riccati(&traj, g.u_s, (t, S::zero()))?
        }
    };
    if !sol.blowups.is_empty() {
        return Err(GeoError::ConjugatePoint { t: sol.blowups[0].to_f64_lossy() });
    }
    let max_ratio = sol
        .samples
        .iter()
        .map(|s| {
            let u = s.value.u();
            (S::one() + u * u).sqrt()
        })
        .fold(S::zero(), |a, b| a.max(b));
    let bound = (S::one() + chart.kappa * chart.kappa).sqrt();
    Ok(SandwichReport { holds: max_ratio <= bound + S::lit(1e-8), max_ratio, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{WarpProfile, Window};

    fn w() -> Window<f64> {
        Window::new(-5.0, 5.0, -5.0, 5.0)
    }

    fn unit(chart: &MetricChart<f64>, b: [f64; 2], d: [f64; 2]) -> UnitTangentVector<f64> {
        UnitTangentVector::new(chart, b, d).unwrap()
    }

    #[test]
    fn frames_and_classes() {
        let o = GreenOptions::default();
        for (k0, gap) in [(-1.0, 2.0), (0.0, 0.0), (-4.0, 4.0)] {
            let c = MetricChart::constant(k0, w()).unwrap();
            let g = green_frame(&c, &unit(&c, [0.3, -0.2], [0.6, 0.8]), &o).unwrap();
            assert!((g.gap - gap).abs() < 1e-7, "{g:?}");
            assert_eq!(g.frame_s[0], 1.0);
        }
        let c = MetricChart::constant(-1.0, w()).unwrap();
        let g = green_frame(&c, &unit(&c, [0.0, 0.0], [1.0, 0.0]), &o).unwrap();
        assert_eq!(classify_rank_one(&g, 1e-4).class, RankClass::RankOne);
        let band = MetricChart::warped(WarpProfile::FlatBand { half_width: 1.0 }, w()).unwrap();
        let g = green_frame(&band, &unit(&band, [0.0, 0.0], [1.0, 0.0]), &o).unwrap();
        assert_eq!(classify_rank_one(&g, 1e-4).class, RankClass::Degenerate);
        let g = green_frame(&band, &unit(&band, [0.0, 0.0], [0.0, 1.0]), &o).unwrap();
        assert_eq!(classify_rank_one(&g, 1e-4).class, RankClass::RankOne);
        let unresolved = GreenData { converged: false, gap: 0.0, ..g };
        assert_eq!(classify_rank_one(&unresolved, 1e-4).class, RankClass::Unresolved);
    }

    #[test]
    fn lyapunov_examples() {
        let o = GreenOptions::default();
        for (k0, lam) in [(-1.0, 1.0), (0.0, 0.0), (-4.0, 2.0)] {
            let c = MetricChart::constant(k0, w()).unwrap();
            let l = lyapunov_exponent(&c, &unit(&c, [0.0, 0.0], [1.0, 0.0]), 20.0, &o).unwrap();
            assert!((l.exponent - lam).abs() < 1e-6, "{l:?}");
            assert!((l.exponent - l.log_growth).abs() < 1e-9, "{l:?}");
        }
    }

    #[test]
    fn sandwich_examples() {
        let o = GreenOptions::default();
        let c = MetricChart::constant(-1.0, w()).unwrap();
        let r = sandwich_check(&c, &unit(&c, [0.0, 0.0], [1.0, 0.0]), Which::Stable, 10.0, &o).unwrap();
        assert!(r.holds && (r.max_ratio - 2f64.sqrt()).abs() < 1e-9, "{r:?}");
        let c = MetricChart::constant(0.0, w()).unwrap();
        let r = sandwich_check(&c, &unit(&c, [0.0, 0.0], [1.0, 0.0]), Which::Stable, 10.0, &o).unwrap();
        assert!(r.holds && (r.max_ratio - 1.0).abs() < 1e-12, "{r:?}");
        let c = MetricChart::constant(-4.0, w()).unwrap();
        let r = sandwich_check(&c, &unit(&c, [0.0, 0.0], [1.0, 0.0]), Which::Unstable, 10.0, &o).unwrap();
        assert!(r.holds && (r.max_ratio - 5f64.sqrt()).abs() < 1e-9, "{r:?}");
    }
}
