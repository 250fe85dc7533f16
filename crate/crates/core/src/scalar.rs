//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar: `f32` or `f64`.
///
/// Tolerances are written as `f64` literals and converted through [`Real::lit`]; they
/// are clamped to the precision of the type where it matters (see [`Real::floor_tol`]).
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Raises `tol` to a small multiple of the machine epsilon of the type.
    #[inline]
    fn floor_tol(tol: Self) -> Self {
        tol.max(Self::epsilon() * Self::lit(64.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<S: Real>(a: S) -> S {
    let two_pi = S::PI() + S::PI();
    let mut r = a % two_pi;
    if r > S::PI() {
        r = r - two_pi;
    } else if r <= -S::PI() {
        r = r + two_pi;
    }
    r
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope<S: Real>(xs: &[S], ys: &[S]) -> Option<S> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = S::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<S>() / n;
    let my = ys.iter().copied().sum::<S>() / n;
    let mut sxy = S::zero();
    let mut sxx = S::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
    }
    if sxx <= S::zero() {
        return None;
    }
    Some(sxy / sxx)
}
