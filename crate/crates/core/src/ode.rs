//! Dormand–Prince 5(4) stepper for small fixed-size systems.
//!
//! The stepper is driven one accepted step at a time so callers can project the state
//! (speed renormalization, chart switches) and record dense-output nodes between steps.

use crate::error::{GeoError, Result};
use crate::scalar::Real;

/// Adaptive step-size policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl<S> {
    pub rel_tol: S,
    pub abs_tol: S,
    pub initial_step: S,
    pub max_step: S,
    pub min_step: S,
    pub max_steps: usize,
}

impl<S: Real> Default for StepControl<S> {
    fn default() -> Self {
        Self {
            rel_tol: S::floor_tol(S::lit(1e-11)),
            abs_tol: S::floor_tol(S::lit(1e-11)),
            initial_step: S::lit(1e-2),
            max_step: S::lit(0.1),
            min_step: S::lit(1e-12),
            max_steps: 2_000_000,
        }
    }
}

impl<S: Real> StepControl<S> {
    pub fn with_tol(mut self, tol: S) -> Self {
        self.rel_tol = S::floor_tol(tol);
        self.abs_tol = S::floor_tol(tol);
        self
    }

    pub fn with_max_step(mut self, h: S) -> Self {
        self.max_step = h;
        self
    }
}

/// Counters accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats<S> {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: S,
    pub max_step: S,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<S: Real, const N: usize>(y: &[S; N], terms: &[(S, &[S; N])]) -> [S; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] = out[i] + *c * k[i];
        }
    }
    out
}

/// Integrator state: time, state vector, and its derivative (first-same-as-last).
#[derive(Debug, Clone)]
pub struct Dopri5<S, const N: usize> {
    t: S,
    y: [S; N],
    f: [S; N],
    h: S,
    ctrl: StepControl<S>,
    stats: StepStats<S>,
}

impl<S: Real, const N: usize> Dopri5<S, N> {
    pub fn new<F>(rhs: &F, t0: S, y0: [S; N], ctrl: StepControl<S>) -> Self
    where
        F: Fn(S, &[S; N]) -> [S; N],
    {
        let f = rhs(t0, &y0);
        Self {
            t: t0,
            y: y0,
            f,
            h: ctrl.initial_step.min(ctrl.max_step),
            ctrl,
            stats: StepStats { min_step: S::infinity(), ..Default::default() },
        }
    }

    pub fn t(&self) -> S {
        self.t
    }

    pub fn y(&self) -> &[S; N] {
        &self.y
    }

    pub fn dydt(&self) -> &[S; N] {
        &self.f
    }

    pub fn stats(&self) -> StepStats<S> {
        self.stats
    }

    /// Replaces the current state (after a projection) and refreshes its derivative.
    pub fn set_state<F>(&mut self, rhs: &F, y: [S; N])
    where
        F: Fn(S, &[S; N]) -> [S; N],
    {
        self.f = rhs(self.t, &y);
        self.y = y;
    }

    /// Takes one accepted step toward `t_end` without passing it.
    pub fn advance<F>(&mut self, rhs: &F, t_end: S) -> Result<()>
    where
        F: Fn(S, &[S; N]) -> [S; N],
    {
        let span = t_end - self.t;
        if span == S::zero() {
            return Ok(());
        }
        let dir = span.signum();
        let mut h = self.h.abs().min(self.ctrl.max_step);
        loop {
            if self.stats.accepted + self.stats.rejected >= self.ctrl.max_steps {
                return Err(GeoError::Integration {
                    t: self.t.to_f64_lossy(),
                    reason: "step budget exhausted".into(),
                });
            }
            let last = h >= span.abs();
            if last {
                h = span.abs();
            }
            let hs = h * dir;
            let (y_new, f_new, err) = self.trial(rhs, hs);
            if err.is_finite() && err <= S::one() {
                self.t = if last { t_end } else { self.t + hs };
                self.y = y_new;
                self.f = f_new;
                self.stats.accepted += 1;
                self.stats.min_step = self.stats.min_step.min(h);
                self.stats.max_step = self.stats.max_step.max(h);
                let factor = if err == S::zero() {
                    S::lit(5.0)
                } else {
                    (S::lit(0.9) * err.powf(S::lit(-0.2))).min(S::lit(5.0)).max(S::lit(0.2))
                };
                // Keep the pre-clipping step when the final step was shortened.
                let base = if last { self.h.abs().max(h) } else { h };
                self.h = (base * factor).min(self.ctrl.max_step);
                return Ok(());
            }
            self.stats.rejected += 1;
            let factor = if err.is_finite() {
                (S::lit(0.9) * err.powf(S::lit(-0.2))).max(S::lit(0.1)).min(S::lit(0.5))
            } else {
                S::lit(0.1)
            };
            h = h * factor;
            if h < self.ctrl.min_step {
                return Err(GeoError::Integration {
                    t: self.t.to_f64_lossy(),
                    reason: "step size underflow".into(),
                });
            }
        }
    }

    /// Takes a step of exactly `h` without error control. Used on frozen step grids, where
    /// the result must depend smoothly on the initial data.
    pub fn step_fixed<F>(&mut self, rhs: &F, h: S)
    where
        F: Fn(S, &[S; N]) -> [S; N],
    {
        let (y, f, _) = self.trial(rhs, h);
        self.t = self.t + h;
        self.y = y;
        self.f = f;
        self.stats.accepted += 1;
    }

    /// Integrates to `t_end` exactly, ignoring intermediate nodes.
    pub fn run_to<F>(&mut self, rhs: &F, t_end: S) -> Result<()>
    where
        F: Fn(S, &[S; N]) -> [S; N],
    {
        while self.t != t_end {
            self.advance(rhs, t_end)?;
        }
        Ok(())
    }

    fn trial<F>(&self, rhs: &F, h: S) -> ([S; N], [S; N], S)
    where
        F: Fn(S, &[S; N]) -> [S; N],
    {
        let l = S::lit;
        let (t, y, k1) = (self.t, &self.y, &self.f);
        let k2 = rhs(t + l(C2) * h, &axpy(y, &[(h * l(A21), k1)]));
        let k3 = rhs(t + l(C3) * h, &axpy(y, &[(h * l(A31), k1), (h * l(A32), &k2)]));
        let k4 = rhs(
            t + l(C4) * h,
            &axpy(y, &[(h * l(A41), k1), (h * l(A42), &k2), (h * l(A43), &k3)]),
        );
        let k5 = rhs(
            t + l(C5) * h,
            &axpy(
                y,
                &[(h * l(A51), k1), (h * l(A52), &k2), (h * l(A53), &k3), (h * l(A54), &k4)],
            ),
        );
        let k6 = rhs(
            t + h,
            &axpy(
                y,
                &[
                    (h * l(A61), k1),
                    (h * l(A62), &k2),
                    (h * l(A63), &k3),
                    (h * l(A64), &k4),
                    (h * l(A65), &k5),
                ],
            ),
        );
        let y_new = axpy(
            y,
            &[(h * l(B1), k1), (h * l(B3), &k3), (h * l(B4), &k4), (h * l(B5), &k5), (h * l(B6), &k6)],
        );
        let k7 = rhs(t + h, &y_new);
        let mut err = S::zero();
        for i in 0..N {
            let e = h
                * (l(E1) * k1[i]
                    + l(E3) * k3[i]
                    + l(E4) * k4[i]
                    + l(E5) * k5[i]
                    + l(E6) * k6[i]
                    + l(E7) * k7[i]);
            let scale = self.ctrl.abs_tol + self.ctrl.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = (e / scale).abs();
            if !r.is_finite() || !y_new[i].is_finite() {
                return (y_new, k7, S::nan());
            }
            err = err.max(r);
        }
        (y_new, k7, err)
    }
}

/// Cubic Hermite interpolation on `[t0, t1]` from values and derivatives.
pub fn hermite3<S: Real>(t0: S, y0: S, d0: S, t1: S, y1: S, d1: S, t: S) -> S {
    let h = t1 - t0;
    if h == S::zero() {
        return y0;
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let two = S::lit(2.0);
    let three = S::lit(3.0);
    let h00 = two * s3 - three * s2 + S::one();
    let h10 = s3 - two * s2 + s;
    let h01 = -two * s3 + three * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Quintic Hermite interpolation from value, first and second derivatives at both ends.
/// Returns the interpolated value and its first derivative.
#[allow(clippy::too_many_arguments)]
pub fn hermite5<S: Real>(t0: S, p0: S, v0: S, a0: S, t1: S, p1: S, v1: S, a1: S, t: S) -> (S, S) {
    let h = t1 - t0;
    if h == S::zero() {
        return (p0, v0);
    }
    let s = (t - t0) / h;
    let l = S::lit;
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h0 = S::one() - l(10.0) * s3 + l(15.0) * s4 - l(6.0) * s5;
    let h1 = s - l(6.0) * s3 + l(8.0) * s4 - l(3.0) * s5;
    let h2 = l(0.5) * s2 - l(1.5) * s3 + l(1.5) * s4 - l(0.5) * s5;
    let h3 = l(0.5) * s3 - s4 + l(0.5) * s5;
    let h4 = -l(4.0) * s3 + l(7.0) * s4 - l(3.0) * s5;
    let h5 = l(10.0) * s3 - l(15.0) * s4 + l(6.0) * s5;
    let d0 = -l(30.0) * s2 + l(60.0) * s3 - l(30.0) * s4;
    let d1 = S::one() - l(18.0) * s2 + l(32.0) * s3 - l(15.0) * s4;
    let d2 = s - l(4.5) * s2 + l(6.0) * s3 - l(2.5) * s4;
    let d3 = l(1.5) * s2 - l(4.0) * s3 + l(2.5) * s4;
    let d4 = -l(12.0) * s2 + l(28.0) * s3 - l(15.0) * s4;
    let d5 = l(30.0) * s2 - l(60.0) * s3 + l(30.0) * s4;
    let h2sq = h * h;
    let value = h0 * p0 + h1 * h * v0 + h2 * h2sq * a0 + h3 * h2sq * a1 + h4 * h * v1 + h5 * p1;
    let deriv = (d0 * p0 + d1 * h * v0 + d2 * h2sq * a0 + d3 * h2sq * a1 + d4 * h * v1 + d5 * p1) / h;
    (value, deriv)
}
