mod common;

use common::{hyperbolic, inner, shipped, unit};
use geoflow::geodesic::{flow_endpoint, integrate_geodesic, UnitTangentVector};
use geoflow::green::{green_frame, green_frame_on, sandwich_check, GreenOptions, Which};
use geoflow::jacobi::{green_approximant, integrate_jacobi, integrate_riccati};
use geoflow::metric::{MetricChart, Window};
use geoflow::ode::StepControl;
use geoflow::GeoError;
use proptest::prelude::*;

fn charts() -> Vec<MetricChart<f64>> {
    shipped().into_iter().map(|(_, c)| c).collect()
}

fn opts() -> GreenOptions<f64> {
    GreenOptions { tol: 1e-8, t_max: 20.0 }
}

/// Charts with K < 0 everywhere on the window.
const NEGATIVE: [usize; 5] = [0, 1, 4, 5, 6];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn riccati_is_the_log_derivative_of_jacobi(idx in 0usize..7, f in prop::array::uniform3(0.0..=1.0f64), u0 in 0.0..2.0f64) {
        let c = &charts()[idx];
        let th = unit(c, inner(c, f[0], f[1]), -3.0 + 6.0 * f[2]);
        let tr = integrate_geodesic(c, &th, (0.0, 3.0), StepControl::default()).unwrap();
        prop_assume!(!tr.truncated);
        let j = integrate_jacobi(&tr, 1.0, u0).unwrap();
        let r = integrate_riccati(&tr, u0, (0.0, 3.0)).unwrap();
        for s in &r.samples {
            let (jv, jp) = j.value_at(s.t).unwrap();
            prop_assert!(jv > 0.0);
            prop_assert!((jp / jv - s.value.u()).abs() <= 1e-7 * (1.0 + s.value.u().abs()), "t = {}", s.t);
        }
    }

    #[test]
    fn green_gap_is_nonnegative(idx in 0usize..7, f in prop::array::uniform3(0.0..=1.0f64)) {
        let c = &charts()[idx];
        let th = unit(c, inner(c, f[0], f[1]), -3.0 + 6.0 * f[2]);
        let Ok(g) = green_frame(c, &th, &opts()) else { return Ok(()) };
        prop_assert!(g.gap >= -1e-8, "{g:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn green_solutions_are_flow_invariant(which in 0usize..5, f in prop::array::uniform3(0.0..=1.0f64), si in 0usize..2) {
        let c = &charts()[NEGATIVE[which]];
        let s = [1.0, 2.5][si];
        let th = unit(c, inner(c, f[0], f[1]), -3.0 + 6.0 * f[2]);
        let o = opts();
        let tr = integrate_geodesic(c, &th, (-o.t_max, o.t_max + s), StepControl::default()).unwrap();
        prop_assume!(!tr.truncated);
        let here = green_frame_on(&tr, &o).unwrap();
        let moved = UnitTangentVector::from_state(c, flow_endpoint(c, &th, s, StepControl::default()).unwrap()).unwrap();
        let there = green_frame(c, &moved, &o).unwrap();
        prop_assume!(here.converged && there.converged);
        // each solution transported in its contracting direction
        let back = integrate_riccati(&tr, there.u_s, (s, 0.0)).unwrap();
        prop_assert!((back.last().value.u() - here.u_s).abs() <= 1e-6, "{} vs {}", back.last().value.u(), here.u_s);
        let fwd = integrate_riccati(&tr, here.u_u, (0.0, s)).unwrap();
        prop_assert!((fwd.last().value.u() - there.u_u).abs() <= 1e-6);
    }
}

#[test]
fn approximants_increase_to_the_limit() {
    for k in [0.5f64, 1.0, 2.0] {
        let c = MetricChart::constant(-k * k, Window::new(-40.0, 40.0, -5.0, 5.0)).unwrap();
        let th = unit(&c, [0.0, 0.0], 0.0);
        let tr = integrate_geodesic(&c, &th, (0.0, 16.0), StepControl::default()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for t in [2.0, 4.0, 8.0, 16.0] {
            let u = green_approximant(&tr, t).unwrap();
            assert!(u >= prev && u <= -k + 1e-12, "kappa {k}, T {t}: {u}");
            assert!((u + k / (k * t).tanh()).abs() < 1e-7);
            prev = u;
        }
    }
}

#[test]
fn sandwich_equality_on_the_hyperbolic_plane() {
    let c = hyperbolic();
    let th = unit(&c, [0.2, -0.3], 0.7);
    let r = sandwich_check(&c, &th, Which::Stable, 5.0, &opts()).unwrap();
    assert!(r.holds && (r.max_ratio - 2f64.sqrt()).abs() < 1e-9, "{r:?}");
}

#[test]
fn sandwich_holds_on_every_model() {
    let mut checked = 0;
    for (name, c) in shipped() {
        for (f, which) in [([0.3, 0.6, 0.2], Which::Stable), ([0.7, 0.4, 0.9], Which::Unstable)] {
            let th = unit(&c, inner(&c, f[0], f[1]), -3.0 + 6.0 * f[2]);
            match sandwich_check(&c, &th, which, 3.0, &opts()) {
                Ok(r) => {
                    assert!(r.holds, "{name}: {r:?}");
                    checked += 1;
                }
                // unconverged Green data is refused, not guessed
                Err(GeoError::Precondition(_)) => {}
                Err(e) => panic!("{name}: {e}"),
            }
        }
    }
    assert!(checked >= 10, "only {checked} sandwich checks ran");
}
