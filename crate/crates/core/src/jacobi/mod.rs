//! Scalar Jacobi and Riccati equations along sampled geodesics, Green approximants and
//! limits, the `coth` envelope check and the decaying conjugate solution.

mod limit;
mod riccati;

pub use limit::{
    green_approximant, green_approximant_at, green_limit, green_limit_on, GreenLimit, LimitDiagnostics,
    DEFAULT_GREEN_TOL, DEFAULT_T_MAX,
};
pub use riccati::{
    integrate_riccati, riccati_bound_check, BoundReport, Projective, RiccatiSample, RiccatiSolution, MAX_SWITCHES,
    U_CAP,
};

use crate::error::{GeoError, Result};
use crate::geodesic::GeodesicTrajectory;
use crate::ode::{hermite3, Dopri5, StepControl};
use crate::scalar::{ls_slope, Real};

/// Curvature along the trajectory as a function of time; NaN outside the sampled span so
/// the stepper rejects the step.
pub fn curvature_fn<S: Real>(traj: &GeodesicTrajectory<S>) -> impl Fn(S) -> S + '_ {
    move |t| traj.curvature_at_time(t).unwrap_or_else(S::nan)
}

pub fn check_span<S: Real>(traj: &GeodesicTrajectory<S>, t0: S, t1: S) -> Result<()> {
    if traj.covers(t0, t1) {
        Ok(())
    } else {
        Err(GeoError::Precondition(format!(
            "trajectory covers [{}, {}], requested [{}, {}]",
            traj.t_min(),
            traj.t_max(),
            t0.min(t1),
            t0.max(t1)
        )))
    }
}

/// Solution of `j'' + K(γ(t)) j = 0`, sampled at the integrator nodes in increasing `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarJacobiSolution<S> {
    pub t: Vec<S>,
    pub j: Vec<S>,
    pub jprime: Vec<S>,
    pub curvature: Vec<S>,
}

impl<S: Real> ScalarJacobiSolution<S> {
    pub fn t_min(&self) -> S {
        self.t[0]
    }

    pub fn t_max(&self) -> S {
        self.t[self.t.len() - 1]
    }

    /// `(j, j')` at `t` by cubic Hermite interpolation (`j'' = -K j` supplies the slope of `j'`).
    pub fn value_at(&self, t: S) -> Option<(S, S)> {
        if !(t >= self.t_min() && t <= self.t_max()) {
            return None;
        }
        if self.t.len() == 1 {
            return Some((self.j[0], self.jprime[0]));
        }
        let i = self.t.partition_point(|&s| s <= t).saturating_sub(1).min(self.t.len() - 2);
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let a0 = -self.curvature[i] * self.j[i];
        let a1 = -self.curvature[i + 1] * self.j[i + 1];
        let j = hermite3(t0, self.j[i], self.jprime[i], t1, self.j[i + 1], self.jprime[i + 1], t);
        let jp = hermite3(t0, self.jprime[i], a0, t1, self.jprime[i + 1], a1, t);
        Some((j, jp))
    }
}

fn jacobi_control<S: Real>() -> StepControl<S> {
    StepControl::default().with_tol(S::lit(1e-12)).with_max_step(S::lit(0.05))
}

/// Integrates the Jacobi equation forward from `t = 0` to the end of the trajectory.
pub fn integrate_jacobi<S: Real>(traj: &GeodesicTrajectory<S>, j0: S, jp0: S) -> Result<ScalarJacobiSolution<S>> {
    integrate_jacobi_span(traj, S::zero(), traj.t_max(), j0, jp0)
}

/// Integrates the Jacobi equation forward from `t0` to the end of the trajectory.
pub fn integrate_jacobi_from<S: Real>(
    traj: &GeodesicTrajectory<S>,
    t0: S,
    j0: S,
    jp0: S,
) -> Result<ScalarJacobiSolution<S>> {
    integrate_jacobi_span(traj, t0, traj.t_max(), j0, jp0)
}

/// Integrates from `(j, j')(t0) = (j0, jp0)` to `t1` (either direction); samples are
/// returned in increasing time.
pub fn integrate_jacobi_span<S: Real>(
    traj: &GeodesicTrajectory<S>,
    t0: S,
    t1: S,
    j0: S,
    jp0: S,
) -> Result<ScalarJacobiSolution<S>> {
    check_span(traj, t0, t1)?;
    let k = curvature_fn(traj);
    let rhs = |t: S, y: &[S; 2]| [y[1], -k(t) * y[0]];
    let mut ode = Dopri5::new(&rhs, t0, [j0, jp0], jacobi_control());
    let mut out = ScalarJacobiSolution { t: vec![t0], j: vec![j0], jprime: vec![jp0], curvature: vec![k(t0)] };
    while ode.t() != t1 {
        ode.advance(&rhs, t1)?;
        let y = ode.y();
        out.t.push(ode.t());
        out.j.push(y[0]);
        out.jprime.push(y[1]);
        out.curvature.push(k(ode.t()));
    }
    if t1 < t0 {
        out.t.reverse();
        out.j.reverse();
        out.jprime.reverse();
        out.curvature.reverse();
    }
    Ok(out)
}

/// Options of [`conjugate_decaying_solution`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayOptions<S> {
    /// Smallest measured growth rate of `log j` accepted as exponential growth.
    pub min_rate: S,
    /// Uniform resampling density for the slope fits.
    pub fit_points: usize,
}

impl<S: Real> Default for DecayOptions<S> {
    fn default() -> Self {
        Self { min_rate: S::lit(0.1), fit_points: 401 }
    }
}

/// The decaying solution `w = j·(∫_t^T j⁻² + tail)` on the nodes of `jsol`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayingSolution<S> {
    pub t: Vec<S>,
    pub w: Vec<S>,
    /// Least-squares slope of `log w` over the middle half of the span.
    pub decay_slope: S,
    /// Measured growth rate `λ̂` of `log j` over the last half of the span.
    pub growth_rate: S,
    /// Geometric tail `j(T)⁻² / (2λ̂)`.
    pub tail: S,
}

fn fit_slope<S: Real>(a: S, b: S, n: usize, f: impl Fn(S) -> Option<S>) -> Option<S> {
    let n = n.max(2);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let t = a + (b - a) * S::from_usize_lossy(i) / S::from_usize_lossy(n - 1);
        xs.push(t);
        ys.push(f(t)?);
    }
    ls_slope(&xs, &ys)
}

/// Builds the solution of the Jacobi equation that decays relative to the growing `j`.
pub fn conjugate_decaying_solution<S: Real>(
    jsol: &ScalarJacobiSolution<S>,
    opts: &DecayOptions<S>,
) -> Result<DecayingSolution<S>> {
    if jsol.j.iter().any(|&j| !(j > S::zero())) {
        return Err(GeoError::Domain("j must be positive on the whole span".into()));
    }
    let (t0, t1) = (jsol.t_min(), jsol.t_max());
    if !(t1 > t0) {
        return Err(GeoError::Precondition("Jacobi solution must span a nonempty interval".into()));
    }
    let half = S::lit(0.5);
    let quarter = S::lit(0.25);
    let len = t1 - t0;
    let rate = fit_slope(t0 + half * len, t1, opts.fit_points, |t| jsol.value_at(t).map(|(j, _)| j.ln()))
        .unwrap_or_else(S::zero);
    if !(rate > opts.min_rate) {
        return Err(GeoError::Precondition(format!(
            "measured growth rate {} of log j does not exceed {}",
            rate, opts.min_rate
        )));
    }
    let n = jsol.t.len();
    let jl = jsol.j[n - 1];
    let tail = (jl * jl).recip() / (rate + rate);
    // cumulative ∫_t^T j⁻² by cubic Hermite quadrature of f = j⁻², f' = -2 j'/j³
    let f = |i: usize| (jsol.j[i] * jsol.j[i]).recip();
    let fp = |i: usize| -(jsol.jprime[i] + jsol.jprime[i]) / (jsol.j[i] * jsol.j[i] * jsol.j[i]);
    let mut integral = vec![S::zero(); n];
    let twelve = S::lit(12.0);
    for i in (0..n - 1).rev() {
        let h = jsol.t[i + 1] - jsol.t[i];
        let piece = h * (f(i) + f(i + 1)) * half + h * h * (fp(i) - fp(i + 1)) / twelve;
        integral[i] = integral[i + 1] + piece;
    }
    let w: Vec<S> = (0..n).map(|i| jsol.j[i] * (integral[i] + tail)).collect();
    let log_w = |t: S| -> Option<S> {
        let i = jsol.t.partition_point(|&s| s <= t).saturating_sub(1).min(n.saturating_sub(2));
        // log w is smooth; linear interpolation between dense nodes suffices for a slope fit
        let (ta, tb) = (jsol.t[i], jsol.t[i + 1]);
        let s = if tb > ta { (t - ta) / (tb - ta) } else { S::zero() };
        Some(w[i].ln() * (S::one() - s) + w[i + 1].ln() * s)
    };
    let decay_slope = fit_slope(t0 + quarter * len, t1 - quarter * len, opts.fit_points, log_w)
        .ok_or_else(|| GeoError::Precondition("decay fit needs at least two nodes".into()))?;
    Ok(DecayingSolution { t: jsol.t.clone(), w, decay_slope, growth_rate: rate, tail })
}
