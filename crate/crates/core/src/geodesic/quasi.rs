//! The quasi-geodesic inequality `ℓ(c[s,t]) ≤ A·d(c(s), c(t)) + B` on a sampled curve.

use crate::error::{GeoError, Result};
use crate::metric::MetricChart;
use crate::scalar::Real;

use super::shooting::{distance_bvp, ShootingOptions};

/// Most curve points compared pairwise (each pair costs one boundary value solve).
pub const MAX_PAIR_POINTS: usize = 64;

/// Relative slack for the boundary value accuracy of arc lengths and distances.
const REL_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiGeodesicReport<S> {
    pub holds: bool,
    /// Sample indices `(s, t)` of the worst pair.
    pub worst_pair: (usize, usize),
    /// Largest `ℓ / (A·d + B)` over the compared pairs.
    pub worst_ratio: S,
}

/// Checks the quasi-geodesic inequality on `curve` (chart points in order).
///
/// Arc lengths are partial sums of geodesic distances between consecutive samples (the
/// length of the piecewise-geodesic interpolant, exact on geodesics). Pairs are taken
/// on an evenly spaced subset of at most [`MAX_PAIR_POINTS`] samples including both ends.
pub fn quasi_geodesic_check<S: Real>(
    chart: &MetricChart<S>,
    curve: &[[S; 2]],
    a: S,
    b: S,
) -> Result<QuasiGeodesicReport<S>> {
    if !(a >= S::one()) || !(b >= S::zero()) {
        return Err(GeoError::Precondition("quasi-geodesic constants need A >= 1 and B >= 0".into()));
    }
    if curve.len() < 2 {
        return Ok(QuasiGeodesicReport { holds: true, worst_pair: (0, 0), worst_ratio: S::zero() });
    }
    let opts = ShootingOptions::default();
    let mut arc = Vec::with_capacity(curve.len());
    arc.push(S::zero());
    for w in curve.windows(2) {
        let piece = if w[0] == w[1] { S::zero() } else { distance_bvp(chart, w[0], w[1], &opts)?.distance };
        let l = *arc.last().unwrap() + piece;
        if !l.is_finite() {
            return Err(GeoError::Precondition("curve length is not finite".into()));
        }
        arc.push(l);
    }
    let n = curve.len();
    let m = n.min(MAX_PAIR_POINTS);
    let mut idx: Vec<usize> = (0..m).map(|k| k * (n - 1) / (m - 1)).collect();
    idx.dedup();
    let mut worst = (S::neg_infinity(), (0, 0));
    for (i, &s) in idx.iter().enumerate() {
        for &t in &idx[i + 1..] {
            let len = arc[t] - arc[s];
            let d = distance_bvp(chart, curve[s], curve[t], &opts)?.distance;
            let denom = a * d + b;
            let ratio = if denom > S::zero() {
                len / denom
            } else if len > S::zero() {
                S::infinity()
            } else {
                S::zero()
            };
            if ratio > worst.0 {
                worst = (ratio, (s, t));
            }
        }
    }
    Ok(QuasiGeodesicReport {
        holds: worst.0 <= S::one() + S::lit(REL_SLACK),
        worst_pair: worst.1,
        worst_ratio: worst.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Window;

    fn quarter_circle(n: usize) -> Vec<[f64; 2]> {
        (0..=n)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 * k as f64 / n as f64;
                [10.0 * a.cos(), 10.0 * a.sin()]
            })
            .collect()
    }

    #[test]
    fn circle_fails_with_a_one() {
        let chart = MetricChart::constant(0.0, Window::new(-20.0, 20.0, -20.0, 20.0)).unwrap();
        let c = quarter_circle(4000);
        let r = quasi_geodesic_check(&chart, &c, 1.0, 0.0).unwrap();
        assert!(!r.holds);
        let oracle = 5.0 * std::f64::consts::PI / (10.0 * 2f64.sqrt());
        assert!((r.worst_ratio - oracle).abs() < 1e-5, "{}", r.worst_ratio);
        assert_eq!(r.worst_pair, (0, 4000));
        assert!(quasi_geodesic_check(&chart, &c, 1.2, 0.0).unwrap().holds);
    }

    #[test]
    fn straight_segment_holds() {
        let chart = MetricChart::constant(0.0, Window::new(-20.0, 20.0, -20.0, 20.0)).unwrap();
        let c: Vec<[f64; 2]> = (0..=100).map(|k| [k as f64 * 0.05, -(k as f64) * 0.02]).collect();
        assert!(quasi_geodesic_check(&chart, &c, 1.0, 0.0).unwrap().holds);
    }
}
