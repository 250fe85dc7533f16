//! Green approximants `u_T(0)` and their limits as `T → ±∞`.
//!
//! The horizon `T` doubles from 1 up to `T_max`. Constant negative curvature converges like
//! `e^{-2κT}`, but along flat stretches the approximants behave like `c - a/T`. That rate
//! is recognized from successive differences, and the limit is then taken from the
//! Richardson combination `(T_k u_k - T_{k-1} u_{k-1}) / (T_k - T_{k-1})`, which is exact
//! for the `1/T` model.

use crate::error::{GeoError, Result};
use crate::geodesic::{integrate_geodesic, GeodesicTrajectory, UnitTangentVector};
use crate::metric::MetricChart;
use crate::ode::StepControl;
use crate::scalar::Real;

use super::riccati::integrate_riccati;

pub const DEFAULT_GREEN_TOL: f64 = 1e-8;
pub const DEFAULT_T_MAX: f64 = 40.0;

/// `u_T(t)` for the Jacobi solution with `j(T) = 0`, `j'(T) = -1`, by backward Riccati
/// integration from `u(T) = -∞`.
pub fn green_approximant_at<S: Real>(traj: &GeodesicTrajectory<S>, horizon: S, t: S) -> Result<S> {
    if !(horizon > t) {
        return Err(GeoError::Precondition("Green horizon must exceed the evaluation time".into()));
    }
    let sol = integrate_riccati(traj, S::neg_infinity(), (horizon, t))?;
    if let Some(&tb) = sol.blowups.first() {
        return Err(GeoError::ConjugatePoint { t: tb.to_f64_lossy() });
    }
    Ok(sol.last().value.u())
}

/// `u_T(0)`.
pub fn green_approximant<S: Real>(traj: &GeodesicTrajectory<S>, horizon: S) -> Result<S> {
    green_approximant_at(traj, horizon, S::zero())
}

/// Convergence record of one limit.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitDiagnostics<S> {
    /// `(T, u_T)` in the order computed.
    pub approximants: Vec<(S, S)>,
    /// Approximants nondecreasing in `T` (stable side, up to 1e-12).
    pub monotone: bool,
    /// The `1/T` model was recognized and the Richardson value used.
    pub algebraic: bool,
    pub value: S,
    /// Change of the limit estimate at the last doubling.
    pub last_change: S,
    pub converged: bool,
}

/// Horizons `1, 2, 4, … < t_max` followed by `t_max`.
pub(crate) fn doubling_schedule<S: Real>(t_max: S) -> Vec<S> {
    let mut ts = Vec::new();
    let mut t = S::one();
    while t < t_max {
        ts.push(t);
        t = t + t;
    }
    ts.push(t_max);
    ts
}

/// Limit of `values[k]` sampled at `ts[k]` with the `1/T` detection described above.
/// Returns `(value, last_change, algebraic)`.
pub(crate) fn extrapolate<S: Real>(ts: &[S], values: &[S]) -> (S, S, bool) {
    let n = values.len();
    if n == 1 {
        return (values[0], S::infinity(), false);
    }
    let raw_change = (values[n - 1] - values[n - 2]).abs();
    if n < 3 {
        return (values[n - 1], raw_change, false);
    }
    let rich = |k: usize| (ts[k] * values[k] - ts[k - 1] * values[k - 1]) / (ts[k] - ts[k - 1]);
    let d1 = values[n - 1] - values[n - 2];
    let d0 = values[n - 2] - values[n - 3];
    let inv = |k: usize| ts[k].recip();
    let expected = (inv(n - 2) - inv(n - 1)) / (inv(n - 3) - inv(n - 2));
    let algebraic = d0 != S::zero() && {
        let q = (d1 / d0) / expected;
        q >= S::lit(0.5) && q <= S::lit(2.0)
    };
    if algebraic {
        let r1 = rich(n - 1);
        let r0 = rich(n - 2);
        (r1, (r1 - r0).abs(), true)
    } else {
        (values[n - 1], raw_change, false)
    }
}

fn stable_limit<S: Real>(traj: &GeodesicTrajectory<S>, tol: S, t_max: S) -> Result<LimitDiagnostics<S>> {
    let avail = t_max.min(traj.t_max());
    if !(avail > S::zero()) {
        return Err(GeoError::Precondition("trajectory does not extend forward".into()));
    }
    let ts = doubling_schedule(avail);
    let mut approximants = Vec::with_capacity(ts.len());
    let mut values = Vec::with_capacity(ts.len());
    let mut best = (values.first().copied().unwrap_or_else(S::zero), S::infinity(), false);
    for (k, &t) in ts.iter().enumerate() {
        let u = green_approximant(traj, t)?;
        approximants.push((t, u));
        values.push(u);
        best = extrapolate(&ts[..=k], &values);
        if best.1 < tol && k + 1 < ts.len() {
            // one more doubling confirms; stop early once two consecutive changes are small
            if k >= 2 && extrapolate(&ts[..k], &values[..k]).1 < tol {
                break;
            }
        }
    }
    let monotone = values.windows(2).all(|w| w[1] >= w[0] - S::lit(1e-12));
    Ok(LimitDiagnostics {
        approximants,
        monotone,
        algebraic: best.2,
        value: best.0,
        last_change: best.1,
        converged: best.1 < tol,
    })
}

/// Stable and unstable Green limits at `t = 0` of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenLimit<S> {
    pub u_s: S,
    pub u_u: S,
    pub converged: bool,
    /// Largest horizon used on either side.
    pub t_used: S,
    pub stable: LimitDiagnostics<S>,
    /// Diagnostics of the reversed geodesic (values are `-u_u` approximants).
    pub unstable: LimitDiagnostics<S>,
}

/// Green limits on a trajectory covering `[-t_max, t_max]` (shorter coverage shortens the
/// horizon). The unstable value uses the reversed geodesic: `u^u(θ) = -u^s(-θ)`.
pub fn green_limit_on<S: Real>(traj: &GeodesicTrajectory<S>, tol: S, t_max: S) -> Result<GreenLimit<S>> {
    let stable = stable_limit(traj, tol, t_max)?;
    let unstable = stable_limit(&traj.reversed(), tol, t_max)?;
    let t_used = stable
        .approximants
        .last()
        .map(|a| a.0)
        .unwrap_or_else(S::zero)
        .max(unstable.approximants.last().map(|a| a.0).unwrap_or_else(S::zero));
    Ok(GreenLimit {
        u_s: stable.value,
        u_u: -unstable.value,
        converged: stable.converged && unstable.converged,
        t_used,
        stable,
        unstable,
    })
}

/// Integrates the geodesic through `theta` on `[-t_max, t_max]` and takes both Green limits.
pub fn green_limit<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    tol: S,
    t_max: S,
) -> Result<GreenLimit<S>> {
    let traj = integrate_geodesic(chart, theta, (-t_max, t_max), StepControl::default())?;
    green_limit_on(&traj, tol, t_max)
}

#[cfg(test)]
mod tests {
    use super::super::tests::straight;
    use super::*;
    use crate::metric::{WarpProfile, Window};

    #[test]
    fn approximant_examples() {
        let hyp = straight(-1.0, (0.0, 10.0));
        assert!((green_approximant(&hyp, 3.0).unwrap() + 1.0 / 3f64.tanh()).abs() < 1e-9);
        let flat = straight(0.0, (0.0, 10.0));
        assert!((green_approximant(&flat, 10.0).unwrap() + 0.1).abs() < 1e-10);
        let k4 = straight(-4.0, (0.0, 10.0));
        assert!((green_approximant(&k4, 3.0).unwrap() + 2.0 / 6f64.tanh()).abs() < 1e-9);
    }

    #[test]
    fn monotone_approximants() {
        let tr = straight(-1.0, (0.0, 16.0));
        let v: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|&t| green_approximant(&tr, t).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
        assert!(v.iter().all(|&u| u < -1.0 + 1e-12));
    }

    #[test]
    fn limit_examples() {
        let w = Window::<f64>::new(-5.0, 5.0, -5.0, 5.0);
        for (k0, kappa) in [(-1.0, 1.0), (-4.0, 2.0)] {
            let chart = MetricChart::constant(k0, w).unwrap();
            let th = UnitTangentVector::new(&chart, [0.0, 0.0], [1.0, 0.0]).unwrap();
            let g = green_limit(&chart, &th, 1e-8, 20.0).unwrap();
            assert!((g.u_s + kappa).abs() < 1e-8 && (g.u_u - kappa).abs() < 1e-8, "{g:?}");
            assert!(g.converged);
        }
        let chart = MetricChart::constant(0.0, w).unwrap();
        let th = UnitTangentVector::new(&chart, [0.0, 0.0], [0.6, 0.8]).unwrap();
        let g = green_limit(&chart, &th, 1e-8, 40.0).unwrap();
        assert!(g.u_s.abs() < 1e-9 && g.u_u.abs() < 1e-9 && g.converged && g.stable.algebraic);
    }

    #[test]
    fn band_limits() {
        let w = Window::<f64>::new(-5.0, 5.0, -5.0, 5.0);
        let chart = MetricChart::warped(WarpProfile::FlatBand { half_width: 1.0 }, w).unwrap();
        let h = UnitTangentVector::new(&chart, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let g = green_limit(&chart, &h, 1e-8, 40.0).unwrap();
        assert!(g.converged && (g.u_u - g.u_s).abs() < 1e-8, "{g:?}");
        let v = UnitTangentVector::new(&chart, [0.0, 0.0], [0.0, 1.0]).unwrap();
        let g = green_limit(&chart, &v, 1e-8, 40.0).unwrap();
        // K = 0 on (-1, 1) and -1 beyond: u^s(0) = -1/2 solves the matching at |t| = 1
        assert!(g.converged && (g.u_s + 0.5).abs() < 1e-8 && (g.u_u - 0.5).abs() < 1e-8, "{g:?}");
    }
}
