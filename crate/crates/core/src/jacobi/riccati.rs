//! Riccati equation `u' + u² + K = 0` in two projective charts.
//!
//! The `u`-chart is left when `|u| > U_CAP`; the inverse chart `v = 1/u` obeys
//! `v' = 1 + K v²` and is left again once `|v| ≥ 1`. A sign change of `v` is a blow-up of
//! `u` and is recorded rather than treated as a failure.

use crate::error::{GeoError, Result};
use crate::geodesic::GeodesicTrajectory;
use crate::ode::{Dopri5, StepControl};
use crate::scalar::Real;

use super::{check_span, curvature_fn};

pub const U_CAP: f64 = 1e6;
pub const MAX_SWITCHES: usize = 10_000;

/// A value in one of the two charts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projective<S> {
    U(S),
    V(S),
}

impl<S: Real> Projective<S> {
    /// `u`, infinite (with the sign of the zero) when `v = ±0`.
    pub fn u(self) -> S {
        match self {
            Projective::U(u) => u,
            Projective::V(v) => v.recip(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiSample<S> {
    pub t: S,
    pub value: Projective<S>,
    pub curvature: S,
}

/// Samples in integration order (decreasing `t` for backward runs).
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution<S> {
    pub samples: Vec<RiccatiSample<S>>,
    /// Times where `u` passed through infinity.
    pub blowups: Vec<S>,
    pub switches: usize,
}

impl<S: Real> RiccatiSolution<S> {
    pub fn first(&self) -> &RiccatiSample<S> {
        &self.samples[0]
    }

    pub fn last(&self) -> &RiccatiSample<S> {
        &self.samples[self.samples.len() - 1]
    }

    /// `(t, u)` pairs in increasing time.
    pub fn sorted_u(&self) -> Vec<(S, S)> {
        let mut v: Vec<(S, S)> = self.samples.iter().map(|s| (s.t, s.value.u())).collect();
        if v.len() > 1 && v[0].0 > v[1].0 {
            v.reverse();
        }
        v
    }

    /// Maximal open intervals of the integration span free of blow-ups.
    pub fn blowup_free_intervals(&self) -> Vec<(S, S)> {
        let (a, b) = {
            let (x, y) = (self.first().t, self.last().t);
            (x.min(y), x.max(y))
        };
        let mut cuts: Vec<S> = self.blowups.clone();
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        let mut out = Vec::new();
        let mut lo = a;
        for c in cuts {
            out.push((lo, c));
            lo = c;
        }
        out.push((lo, b));
        out
    }
}

fn riccati_control<S: Real>() -> StepControl<S> {
    StepControl::default().with_tol(S::lit(1e-12)).with_max_step(S::lit(0.05))
}

/// Integrates the Riccati equation along `traj` from `t_span.0` to `t_span.1` (either
/// direction). `u0` may be `±∞`, which starts in the inverse chart at `v = ±0`.
pub fn integrate_riccati<S: Real>(
    traj: &GeodesicTrajectory<S>,
    u0: S,
    t_span: (S, S),
) -> Result<RiccatiSolution<S>> {
    let (t0, t1) = t_span;
    check_span(traj, t0, t1)?;
    if u0.is_nan() {
        return Err(GeoError::Precondition("initial Riccati value is NaN".into()));
    }
    let k = curvature_fn(traj);
    let fu = |t: S, y: &[S; 1]| [-y[0] * y[0] - k(t)];
    let fv = |t: S, y: &[S; 1]| [S::one() + k(t) * y[0] * y[0]];
    let cap = S::lit(U_CAP);
    let mut inverse = u0.is_infinite() || u0.abs() > cap;
    let y0 = if inverse { u0.recip() } else { u0 };
    let mut ode = if inverse {
        Dopri5::new(&fv, t0, [y0], riccati_control())
    } else {
        Dopri5::new(&fu, t0, [y0], riccati_control())
    };
    let wrap = |inv: bool, y: S| if inv { Projective::V(y) } else { Projective::U(y) };
    let mut sol = RiccatiSolution {
        samples: vec![RiccatiSample { t: t0, value: wrap(inverse, y0), curvature: k(t0) }],
        blowups: Vec::new(),
        switches: 0,
    };
    // last nonzero v and its time, for sign-change detection
    let mut last_v: Option<(S, S)> = if inverse && y0 != S::zero() { Some((t0, y0)) } else { None };
    while ode.t() != t1 {
        if inverse {
            ode.advance(&fv, t1)?;
        } else {
            ode.advance(&fu, t1)?;
        }
        let (t, y) = (ode.t(), ode.y()[0]);
        if inverse {
            if let Some((tp, vp)) = last_v {
                if y != S::zero() && (y > S::zero()) != (vp > S::zero()) {
                    sol.blowups.push(tp + (t - tp) * vp / (vp - y));
                }
            }
            if y != S::zero() {
                last_v = Some((t, y));
            }
        }
        sol.samples.push(RiccatiSample { t, value: wrap(inverse, y), curvature: k(t) });
        if !inverse && y.abs() > cap {
            inverse = true;
            ode.set_state(&fv, [y.recip()]);
            last_v = Some((t, y.recip()));
            sol.switches += 1;
        } else if inverse && y.abs() >= S::one() {
            inverse = false;
            ode.set_state(&fu, [y.recip()]);
            last_v = None;
            sol.switches += 1;
        }
        if sol.switches > MAX_SWITCHES {
            return Err(GeoError::Diagnostics(format!("more than {MAX_SWITCHES} projective chart switches")));
        }
    }
    Ok(sol)
}

/// Outcome of the `coth` envelope check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport<S> {
    pub holds: bool,
    /// Smallest signed distance to the envelope relative to `max(1, |u|)` (negative on
    /// violation). Near a blow-up `|u|` reaches the chart cap, where an absolute slack would
    /// ask for more digits than the integration carries.
    pub margin: S,
}

/// Slack allowed on the envelope.
const BOUND_SLACK: f64 = 1e-6;

/// `κ coth(κ s)` with the `κ → 0` limit `1/s` and `s = ∞ ↦ κ`.
fn kcoth<S: Real>(kappa: S, s: S) -> S {
    if s.is_infinite() {
        return kappa;
    }
    if kappa == S::zero() {
        return s.recip();
    }
    let x = kappa * s;
    kappa / x.tanh()
}

/// Checks `-κ coth(κ(b - t)) ≤ u(t) ≤ κ coth(κ(t - a))` at the samples strictly inside
/// `(a, b)`; either end may be infinite. With `green = true` the Green-solution bound
/// `|u| ≤ κ` is checked as well.
pub fn riccati_bound_check<S: Real>(
    sol: &RiccatiSolution<S>,
    kappa: S,
    interval: (S, S),
    green: bool,
) -> BoundReport<S> {
    let (a, b) = interval;
    let mut margin = S::infinity();
    for s in &sol.samples {
        if !(s.t > a && s.t < b) {
            continue;
        }
        let u = s.value.u();
        let upper = kcoth(kappa, s.t - a);
        let lower = -kcoth(kappa, b - s.t);
        let mut m = (upper - u).min(u - lower);
        if green {
            m = m.min(kappa - u.abs());
        }
        m = m / u.abs().max(S::one());
        if m.is_nan() {
            m = S::neg_infinity();
        }
        margin = margin.min(m);
    }
    BoundReport { holds: margin >= -S::lit(BOUND_SLACK), margin }
}
