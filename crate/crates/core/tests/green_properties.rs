mod common;

use common::{band, curvature_minus_four, hyperbolic, inner, shipped, unit};
use geoflow::geodesic::{flow_endpoint, UnitTangentVector};
use geoflow::green::{
    classify_rank_one, green_frame, lyapunov_exponent, GreenOptions, RankClass, DEFAULT_RANK_THRESHOLD,
};
use geoflow::metric::MetricChart;
use geoflow::ode::StepControl;
use proptest::prelude::*;

fn opts() -> GreenOptions<f64> {
    GreenOptions { tol: 1e-8, t_max: 20.0 }
}

fn samples(c: &MetricChart<f64>) -> Vec<UnitTangentVector<f64>> {
    let mut out = Vec::new();
    for (i, fx) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        for (j, fy) in [0.3, 0.5, 0.7].into_iter().enumerate() {
            let angle = -3.0 + 0.7 * (3 * i + j) as f64;
            out.push(unit(c, inner(c, fx, fy), angle));
        }
    }
    out
}

/// Gaps inside this band around the threshold are not resolved by the limit tolerance.
fn ambiguous(gap: f64) -> bool {
    gap > 0.1 * DEFAULT_RANK_THRESHOLD && gap < 10.0 * DEFAULT_RANK_THRESHOLD
}

#[test]
fn classification_is_invariant_along_orbits() {
    let mut compared = 0;
    for (name, c) in shipped() {
        for th in samples(&c) {
            let Ok(here) = green_frame(&c, &th, &opts()) else { continue };
            if !here.converged || ambiguous(here.gap) {
                continue;
            }
            let class = classify_rank_one(&here, DEFAULT_RANK_THRESHOLD).class;
            for t in [-5.0, -1.0, 1.0, 5.0] {
                let Ok(state) = flow_endpoint(&c, &th, t, StepControl::default()) else { continue };
                let Ok(moved) = UnitTangentVector::from_state(&c, state) else { continue };
                let Ok(there) = green_frame(&c, &moved, &opts()) else { continue };
                if !there.converged || ambiguous(there.gap) {
                    continue;
                }
                let other = classify_rank_one(&there, DEFAULT_RANK_THRESHOLD).class;
                assert_eq!(class, other, "{name}: {th:?} at t = {t}: {here:?} vs {there:?}");
                compared += 1;
            }
        }
    }
    assert!(compared >= 150, "only {compared} orbit comparisons");
}

#[test]
fn positive_lyapunov_implies_rank_one() {
    let mut positive = 0;
    for (name, c) in shipped() {
        for th in samples(&c) {
            let Ok(l) = lyapunov_exponent(&c, &th, 20.0, &opts()) else { continue };
            if l.exponent > 0.05 {
                positive += 1;
                let g = green_frame(&c, &th, &opts()).unwrap();
                let class = classify_rank_one(&g, DEFAULT_RANK_THRESHOLD).class;
                assert_eq!(class, RankClass::RankOne, "{name}: {th:?}, exponent {}", l.exponent);
            }
        }
    }
    assert!(positive >= 20, "only {positive} vectors with positive exponent");
}

#[test]
fn flat_band_horizontals_are_degenerate() {
    let c = band();
    for y in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        let th = unit(&c, [0.0, y], 0.0);
        let g = green_frame(&c, &th, &opts()).unwrap();
        assert_eq!(classify_rank_one(&g, DEFAULT_RANK_THRESHOLD).class, RankClass::Degenerate, "y = {y}: {g:?}");
    }
}

/// Eight vectors at Sasaki distance `r` from `th`: four base shifts and four mixed shifts.
fn ring(c: &MetricChart<f64>, th: &UnitTangentVector<f64>, r: f64) -> Vec<UnitTangentVector<f64>> {
    let a = th.angle(c);
    let (sx, sy) = c.scales(th.base);
    let mut out = Vec::new();
    for k in 0..4 {
        let phi = k as f64 * std::f64::consts::FRAC_PI_2;
        let base = [th.base[0] + r * phi.cos() / sx, th.base[1] + r * phi.sin() / sy];
        out.push(unit(c, base, a));
        let h = r / 2f64.sqrt();
        let base = [th.base[0] + h * phi.cos() / sx, th.base[1] + h * phi.sin() / sy];
        out.push(unit(c, base, a + if k % 2 == 0 { h } else { -h }));
    }
    out
}

#[test]
fn rank_one_is_open() {
    for (name, c) in [("hyperbolic", hyperbolic()), ("minus_four", curvature_minus_four()), ("band", band())] {
        let mut centres = 0;
        for th in samples(&c) {
            let g = green_frame(&c, &th, &opts()).unwrap();
            if classify_rank_one(&g, DEFAULT_RANK_THRESHOLD).class != RankClass::RankOne {
                continue;
            }
            centres += 1;
            for p in ring(&c, &th, 1e-3) {
                let gp = green_frame(&c, &p, &opts()).unwrap();
                let class = classify_rank_one(&gp, DEFAULT_RANK_THRESHOLD).class;
                assert_eq!(class, RankClass::RankOne, "{name}: neighbour {p:?} of {th:?}: {gp:?}");
            }
        }
        assert!(centres >= 3, "{name}: only {centres} rank-one centres");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unstable_is_minus_stable_of_reversed(idx in 0usize..7, f in prop::array::uniform3(0.0..=1.0f64)) {
        let (_, c) = &shipped()[idx];
        let th = unit(c, inner(c, f[0], f[1]), -3.0 + 6.0 * f[2]);
        let Ok(g) = green_frame(c, &th, &opts()) else { return Ok(()) };
        let r = green_frame(c, &th.reversed(), &opts()).unwrap();
        prop_assert!((g.u_u + r.u_s).abs() <= 1e-8, "{} vs {}", g.u_u, r.u_s);
        prop_assert!((g.u_s + r.u_u).abs() <= 1e-8, "{} vs {}", g.u_s, r.u_u);
    }

    #[test]
    fn converged_green_data_is_bounded_by_kappa(idx in 0usize..7, f in prop::array::uniform3(0.0..=1.0f64)) {
        let (_, c) = &shipped()[idx];
        let th = unit(c, inner(c, f[0], f[1]), -3.0 + 6.0 * f[2]);
        let Ok(g) = green_frame(c, &th, &opts()) else { return Ok(()) };
        prop_assume!(g.converged);
        prop_assert!(g.u_s.abs() <= c.kappa + 1e-6 && g.u_u.abs() <= c.kappa + 1e-6, "{g:?}");
        let class = classify_rank_one(&g, DEFAULT_RANK_THRESHOLD).class;
        prop_assert_eq!(class == RankClass::RankOne, g.gap > DEFAULT_RANK_THRESHOLD);
    }
}
