mod common;

use common::{band, flat, horocyclic, hyperbolic, inner, shipped, unit};
use geoflow::geodesic::{
    distance_bvp, flow_endpoint, integrate_geodesic, quasi_geodesic_check, sasaki_distance, ShootingOptions,
    UnitTangentVector,
};
use geoflow::metric::MetricChart;
use geoflow::ode::StepControl;
use proptest::prelude::*;

fn charts() -> Vec<MetricChart<f64>> {
    shipped().into_iter().map(|(_, c)| c).collect()
}

fn close4(a: [f64; 4], b: [f64; 4], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_is_a_group_action(idx in 0usize..7, fx in 0.0..=1.0f64, fy in 0.0..=1.0f64, ang in -3.1..3.1f64,
                              s in 0.1..1.0f64, t in 0.1..1.0f64) {
        let c = &charts()[idx];
        let th = unit(c, inner(c, fx, fy), ang);
        let ctrl = StepControl::default();
        let Ok(direct) = flow_endpoint(c, &th, s + t, ctrl) else { return Ok(()) };
        let mid = UnitTangentVector::from_state(c, flow_endpoint(c, &th, s, ctrl).unwrap()).unwrap();
        let two_step = flow_endpoint(c, &mid, t, ctrl).unwrap();
        prop_assert!(close4(direct, two_step, 1e-7), "{direct:?} vs {two_step:?}");
    }

    #[test]
    fn reversal_retraces(idx in 0usize..7, fx in 0.0..=1.0f64, fy in 0.0..=1.0f64, ang in -3.1..3.1f64, t in 0.1..1.5f64) {
        let c = &charts()[idx];
        let th = unit(c, inner(c, fx, fy), ang);
        let ctrl = StepControl::default();
        let Ok(end) = flow_endpoint(c, &th, t, ctrl) else { return Ok(()) };
        let back = UnitTangentVector::from_state(c, end).unwrap().reversed();
        let home = flow_endpoint(c, &back, t, ctrl).unwrap();
        let want = th.reversed().state();
        prop_assert!(close4(home, want, 1e-7), "{home:?} vs {want:?}");
    }

    #[test]
    fn trajectories_keep_unit_speed(idx in 0usize..7, fx in 0.0..=1.0f64, fy in 0.0..=1.0f64, ang in -3.1..3.1f64) {
        let c = &charts()[idx];
        let th = unit(c, inner(c, fx, fy), ang);
        let tr = integrate_geodesic(c, &th, (-2.0, 2.0), StepControl::default()).unwrap();
        prop_assert!(tr.stats.max_speed_drift <= 1e-8);
        for s in &tr.samples {
            let p = [s.state[0], s.state[1]];
            prop_assert!((c.metric_norm(p, [s.state[2], s.state[3]]) - 1.0).abs() <= 1e-8);
            prop_assert!((s.curvature - c.curvature(p)).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bvp_is_symmetric(idx in 0usize..7, a in prop::array::uniform4(0.0..=1.0f64)) {
        let c = &charts()[idx];
        let (p, q) = (inner(c, a[0], a[1]), inner(c, a[2], a[3]));
        let o = ShootingOptions::default();
        let d1 = distance_bvp(c, p, q, &o).unwrap().distance;
        let d2 = distance_bvp(c, q, p, &o).unwrap().distance;
        prop_assert!((d1 - d2).abs() <= 1e-9, "{d1} vs {d2}");
    }

    #[test]
    fn bvp_triangle_inequality(idx in 0usize..7, a in prop::array::uniform6(0.0..=1.0f64)) {
        let c = &charts()[idx];
        let (p, q, r) = (inner(c, a[0], a[1]), inner(c, a[2], a[3]), inner(c, a[4], a[5]));
        let o = ShootingOptions::default();
        let d = |x, y| distance_bvp(c, x, y, &o).unwrap().distance;
        prop_assert!(d(p, r) <= d(p, q) + d(q, r) + 1e-8);
    }

    #[test]
    fn bvp_endpoint_hits_the_target(idx in 0usize..7, a in prop::array::uniform4(0.0..=1.0f64)) {
        let c = &charts()[idx];
        let (p, q) = (inner(c, a[0], a[1]), inner(c, a[2], a[3]));
        prop_assume!(p != q);
        let sol = distance_bvp(c, p, q, &ShootingOptions::default()).unwrap();
        prop_assert!(sol.residual <= 1e-9);
        let th = UnitTangentVector::new(c, p, sol.dir).unwrap();
        let e = flow_endpoint(c, &th, sol.distance, StepControl::default()).unwrap();
        prop_assert!(c.metric_norm(q, [e[0] - q[0], e[1] - q[1]]) <= 1e-7);
    }

    #[test]
    fn warped_distances_are_translation_invariant(which in 0usize..3, a in prop::array::uniform4(0.0..=1.0f64), dx in -1.0..1.0f64) {
        let c = [hyperbolic(), band(), horocyclic()][which];
        let (p, q) = (inner(&c, a[0], a[1]), inner(&c, a[2], a[3]));
        let o = ShootingOptions::default();
        let d1 = distance_bvp(&c, p, q, &o).unwrap().distance;
        let d2 = distance_bvp(&c, [p[0] + dx, p[1]], [q[0] + dx, q[1]], &o).unwrap().distance;
        prop_assert!((d1 - d2).abs() <= 1e-9);
    }
}

#[test]
fn sasaki_examples() {
    let c = flat();
    let a = UnitTangentVector::new(&c, [0.0, 0.0], [1.0, 0.0]).unwrap();
    let b = UnitTangentVector::new(&c, [3.0, 4.0], [1.0, 0.0]).unwrap();
    let v = UnitTangentVector::new(&c, [0.0, 0.0], [0.0, 1.0]).unwrap();
    assert_eq!(sasaki_distance(&c, &a, &a).unwrap(), 0.0);
    assert!((sasaki_distance(&c, &a, &b).unwrap() - 5.0).abs() < 1e-9);
    assert!((sasaki_distance(&c, &a, &v).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    let h = hyperbolic();
    let x = unit(&h, [0.3, -0.2], 0.4);
    let y = unit(&h, [-0.5, 0.7], 2.0);
    let (dxy, dyx) = (sasaki_distance(&h, &x, &y).unwrap(), sasaki_distance(&h, &y, &x).unwrap());
    assert!((dxy - dyx).abs() < 1e-9);
}

#[test]
fn quasi_geodesic_examples() {
    let c = flat();
    let circle: Vec<[f64; 2]> = (0..=400)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / 400.0;
            [10.0 * a.cos() - 5.0, 10.0 * a.sin() - 5.0]
        })
        .collect();
    let r = quasi_geodesic_check(&c, &circle, 1.0, 0.0).unwrap();
    let want = 5.0 * std::f64::consts::PI / (10.0 * 2f64.sqrt());
    assert!(!r.holds && (r.worst_ratio - want).abs() < 1e-4, "{r:?}");
    assert!(quasi_geodesic_check(&c, &circle, 1.2, 0.0).unwrap().holds);

    let h = hyperbolic();
    let th = unit(&h, [-1.0, 0.5], 0.3);
    let tr = integrate_geodesic(&h, &th, (0.0, 3.0), StepControl::default()).unwrap();
    let pts: Vec<[f64; 2]> = (0..=60).map(|i| tr.position_at(0.05 * i as f64).unwrap()).collect();
    let r = quasi_geodesic_check(&h, &pts, 1.0, 0.0).unwrap();
    assert!(r.holds, "{r:?}");
}
