use proptest::prelude::*;

use resil_core::controller::{allocate, closest_point};
use resil_core::disturbance::{sample_signal, DisturbanceKind, DisturbanceSpec};
use resil_core::dynamics::{cw_expm, rotate_force, unrotate_force, CwParams, Vec2, Vec4};
use resil_core::geometry::{erode_by_segment, zonotope_of_inputs, Segment2};
use resil_core::resilience::{lyapunov_solve, reach_radius_bound};

fn vec2(range: f64) -> impl Strategy<Value = Vec2> {
    (-range..range, -range..range).prop_map(|(x, y)| Vec2::new(x, y))
}

fn columns(max: usize) -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec(vec2(2.0), 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn expm_semigroup(s in 0.0..5e3f64, t in 0.0..5e3f64) {
        let p = CwParams::default();
        let lhs = cw_expm(&p, s) * cw_expm(&p, t);
        let rhs = cw_expm(&p, s + t);
        prop_assert!((lhs - rhs).abs().max() <= 1e-9 * (1.0 + rhs.abs().max()));
    }

    #[test]
    fn rotation_round_trip(theta in -10.0..10.0f64, f in prop::array::uniform4(-1.0..1.0f64)) {
        let f = Vec4::from(f);
        let back = unrotate_force(theta, &rotate_force(theta, &f));
        prop_assert!((back - f).norm() <= 1e-12);
        prop_assert!((rotate_force(theta, &f).norm() - f.norm()).abs() <= 1e-12);
    }

    #[test]
    fn zonotope_holds_every_box_image(cols in columns(6), u in prop::collection::vec(0.0..=1.0f64, 6)) {
        let z = zonotope_of_inputs(&cols);
        let p = cols.iter().zip(&u).fold(Vec2::zeros(), |acc, (c, ui)| acc + c * *ui);
        prop_assert!(z.contains(&p, 1e-9));
    }

    #[test]
    fn zonotope_support_is_sum_of_positive_parts(cols in columns(6), d in vec2(1.0)) {
        let z = zonotope_of_inputs(&cols);
        let expect: f64 = cols.iter().map(|c| c.dot(&d).max(0.0)).sum();
        prop_assert!((z.support(&d) - expect).abs() <= 1e-9);
    }

    #[test]
    fn eroded_set_shifted_by_segment_stays_inside(
        cols in columns(5),
        a in vec2(0.5),
        b in vec2(0.5),
        q in vec2(4.0),
    ) {
        let z = zonotope_of_inputs(&cols);
        let seg = Segment2::new(a, b);
        if let Some(e) = erode_by_segment(&z, &seg) {
            for v in e.vertices_vec() {
                prop_assert!(z.contains(&(v + a), 1e-8) && z.contains(&(v + b), 1e-8));
            }
            if e.contains(&q, 0.0) {
                prop_assert!(z.contains(&(q + (a + b) * 0.5), 1e-8));
            }
        }
    }

    #[test]
    fn allocation_respects_bounds(cols in columns(5), target in vec2(4.0)) {
        let a = allocate(&target, &cols);
        prop_assert!(a.u.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        let applied = cols.iter().zip(&a.u).fold(Vec2::zeros(), |acc, (c, ui)| acc + c * *ui);
        prop_assert!((applied - a.achieved).norm() <= 1e-9);
        let z = zonotope_of_inputs(&cols);
        if z.contains(&target, -1e-7) {
            prop_assert!(!a.saturated);
            prop_assert!((a.achieved - target).norm() <= 1e-8);
        }
        if a.saturated {
            prop_assert!((a.achieved - closest_point(&z, &target)).norm() <= 1e-6);
        }
    }

    #[test]
    fn lipschitz_signal_within_bounds(seed in any::<u64>(), l in 1e-3..1.0f64, w_max in 1e-3..1.0f64) {
        let spec = DisturbanceSpec { seed, lip_l_per_s: l, w_max, ..Default::default() };
        let dt = 0.5;
        let g: Vec<f64> = (0..2000).map(|k| k as f64 * dt).collect();
        let w = sample_signal(&spec, &g);
        prop_assert!(w.iter().all(|&v| (0.0..=w_max).contains(&v)));
        prop_assert!(w.windows(2).all(|p| (p[1] - p[0]).abs() <= l * dt * (1.0 + 1e-12)));
    }

    #[test]
    fn bangbang_signal_two_levels(seed in any::<u64>(), w_max in 1e-3..1.0f64) {
        let spec = DisturbanceSpec { kind: DisturbanceKind::Bangbang, seed, w_max, ..Default::default() };
        let g: Vec<f64> = (0..5000).map(|k| k as f64).collect();
        prop_assert!(sample_signal(&spec, &g).iter().all(|&v| v == 0.0 || v == w_max));
    }

    #[test]
    fn reach_radius_grows_with_horizon(c in 0.01..2.0f64, mu in -1.0..1.0f64, t in 0.01..5.0f64) {
        let r0 = reach_radius_bound(c, mu, t);
        prop_assert!(r0 >= 0.0);
        prop_assert!(reach_radius_bound(c, mu, t * 1.5) >= r0);
    }

    #[test]
    fn lyapunov_solution_symmetric(entries in prop::array::uniform16(-1.0..1.0f64), shift in 0.5..3.0f64) {
        let m = resil_core::dynamics::Matrix4::from_row_slice(&entries);
        let top = m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let a = m - resil_core::dynamics::Matrix4::identity() * (top + shift);
        let q = resil_core::dynamics::Matrix4::identity();
        let p = lyapunov_solve(&a, &q).unwrap();
        prop_assert!((p - p.transpose()).abs().max() <= 1e-9 * p.abs().max());
        prop_assert!(p.symmetric_eigenvalues().min() > 0.0);
    }
}
