//! Distance between two geodesics over `[-T, T]` and the bi-asymptotic verdict.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geodesic::{distance_bvp, integrate_geodesic, ShootingOptions, UnitTangentVector};
use crate::metric::MetricChart;
use crate::ode::StepControl;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Biasymptotic,
    ForwardOnly,
    Neither,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Biasymptotic => "biasymptotic",
            Verdict::ForwardOnly => "forward_only",
            Verdict::Neither => "neither",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasymptoticReport<S> {
    pub forward_sup: S,
    pub backward_sup: S,
    pub verdict: Verdict,
    /// `max(forward_sup, backward_sup)` for bi-asymptotic pairs.
    pub hausdorff: Option<S>,
    /// `(t, d(γ₁(t), γ₂(t)))` samples.
    pub samples: Vec<(S, S)>,
}

/// Number of sample times on `[-T, T]`.
const SAMPLES: usize = 81;
/// A tail is bounded when its sup stays below this multiple of the initial distance.
const BOUND_FACTOR: f64 = 1.5;
/// Tolerance on "nonincreasing" (boundary value accuracy).
const MONO_SLACK: f64 = 1e-7;

/// Samples `d(γ₁(t), γ₂(t))` on `[-T, T]`. A tail (last quarter of each half) passes when it
/// is nonincreasing away from `t = 0` or stays below `1.5·max(d(0), 1e-3)`.
pub fn biasymptotic_distance<S: Real>(
    chart: &MetricChart<S>,
    theta1: &UnitTangentVector<S>,
    theta2: &UnitTangentVector<S>,
    t: S,
) -> Result<BiasymptoticReport<S>> {
    let ctrl = StepControl::default();
    let g1 = integrate_geodesic(chart, theta1, (-t, t), ctrl)?;
    let g2 = integrate_geodesic(chart, theta2, (-t, t), ctrl)?;
    // Walk outward from t = 0 so every solve is warm-started from its neighbour.
    let mid = SAMPLES / 2;
    let time = |k: usize| -t + (t + t) * S::from_usize_lossy(k) / S::from_usize_lossy(SAMPLES - 1);
    let mut dist: Vec<Option<S>> = vec![None; SAMPLES];
    let center = (mid..SAMPLES).collect::<Vec<_>>();
    let left = (0..mid).rev().collect::<Vec<_>>();
    let mut center_warm: Option<(S, S)> = None;
    for (i, branch) in [center, left].into_iter().enumerate() {
        let mut warm = if i == 0 { None } else { center_warm };
        for k in branch {
            let s = time(k);
            let (Some(p), Some(q)) = (g1.position_at(s), g2.position_at(s)) else { continue };
            let d = if p == q {
                S::zero()
            } else {
                let o = ShootingOptions { warm_start: warm, ..ShootingOptions::default() };
                let sol = distance_bvp(chart, p, q, &o)
                    .or_else(|_| distance_bvp(chart, p, q, &ShootingOptions::default()))?;
                warm = Some((sol.angle, sol.distance));
                if k == mid {
                    center_warm = warm;
                }
                sol.distance
            };
            dist[k] = Some(d);
        }
    }
    let samples: Vec<(S, S)> = dist.iter().enumerate().filter_map(|(k, d)| d.map(|d| (time(k), d))).collect();
    let zero = S::zero();
    let d0 = samples
        .iter()
        .min_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).unwrap_or(std::cmp::Ordering::Equal))
        .map(|s| s.1)
        .unwrap_or(zero);
    let fwd: Vec<S> = samples.iter().filter(|s| s.0 >= zero).map(|s| s.1).collect();
    let mut bwd: Vec<S> = samples.iter().filter(|s| s.0 <= zero).map(|s| s.1).collect();
    bwd.reverse();
    let sup = |v: &[S]| v.iter().copied().fold(zero, S::max);
    let bound = S::lit(BOUND_FACTOR) * d0.max(S::lit(1e-3));
    let tail_ok = |v: &[S]| {
        if v.is_empty() {
            return true;
        }
        let start = (v.len() * 3) / 4;
        let tail = &v[start.min(v.len() - 1)..];
        let nonincreasing = tail.windows(2).all(|w| w[1] <= w[0] + S::lit(MONO_SLACK));
        nonincreasing || sup(tail) <= bound
    };
    let (f_ok, b_ok) = (tail_ok(&fwd), tail_ok(&bwd));
    let verdict = match (f_ok, b_ok) {
        (true, true) => Verdict::Biasymptotic,
        (true, false) => Verdict::ForwardOnly,
        _ => Verdict::Neither,
    };
    let (forward_sup, backward_sup) = (sup(&fwd), sup(&bwd));
    let hausdorff = (verdict == Verdict::Biasymptotic).then(|| forward_sup.max(backward_sup));
    Ok(BiasymptoticReport { forward_sup, backward_sup, verdict, hausdorff, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{WarpProfile, Window};

    #[test]
    fn same_vector() {
        let c = MetricChart::constant(-1.0, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let th = UnitTangentVector::new(&c, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let r = biasymptotic_distance(&c, &th, &th, 5.0).unwrap();
        assert_eq!(r.hausdorff, Some(0.0));
    }

    #[test]
    fn band_horizontals() {
        let c = MetricChart::warped(WarpProfile::FlatBand { half_width: 1.0 }, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let a = UnitTangentVector::new(&c, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let b = UnitTangentVector::new(&c, [0.0, 1.0], [1.0, 0.0]).unwrap();
        let r = biasymptotic_distance(&c, &a, &b, 10.0).unwrap();
        assert_eq!(r.verdict, Verdict::Biasymptotic);
        assert!((r.hausdorff.unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hyperbolic_stable_pair() {
        // horocyclic coordinates: the vertical lines are mutually forward asymptotic
        let c = MetricChart::warped(WarpProfile::Exp { rate: 1.0 }, Window::<f64>::new(-5.0, 5.0, -5.0, 5.0)).unwrap();
        let a = UnitTangentVector::new(&c, [0.0, 0.0], [0.0, 1.0]).unwrap();
        let b = UnitTangentVector::new(&c, [0.3, 0.0], [0.0, 1.0]).unwrap();
        let r = biasymptotic_distance(&c, &a, &b, 8.0).unwrap();
        assert_eq!(r.verdict, Verdict::ForwardOnly, "{:?}", r.samples);
    }
}
