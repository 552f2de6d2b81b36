use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use proptest::prelude::*;
use tiot_core::kepler::*;
use tiot_core::lambert::*;

fn g() -> GravModel {
    GravModel::earth()
}

fn position() -> impl Strategy<Value = Vector3<f64>> {
    (7000.0..30000.0f64, 0.0..0.6f64, 0.0..PI, 0.0..TAU, 0.0..TAU, 0.0..TAU).prop_map(|(a, e, i, o, w, m)| {
        let el = ClassicalElements::new(a, e, i, o, w, 0.0).unwrap();
        elements_to_state(&el, m, g()).unwrap().r
    })
}

fn branch() -> impl Strategy<Value = BranchFlag> {
    prop_oneof![Just(BranchFlag::Short), Just(BranchFlag::Long)]
}

fn angle_between(r1: &Vector3<f64>, r2: &Vector3<f64>) -> f64 {
    r1.cross(r2).norm().atan2(r1.dot(r2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn arcs_reach_the_target(r1 in position(), r2 in position(), lt in 1.0..4.61f64, d1 in branch()) {
        let ang = angle_between(&r1, &r2);
        prop_assume!(ang.sin().abs() > 1e-3);
        let tof = 10f64.powf(lt);
        let sol = solve_lambert(&r1, &r2, tof, d1, g()).unwrap();
        let f = propagate(&CartesianState::new(r1, sol.v1g), tof, g()).unwrap();
        prop_assert!((f.r - r2).norm() < 1e-8 * r2.norm(), "residual {}", (f.r - r2).norm() / r2.norm());
        prop_assert!((f.v - sol.v2g).norm() < 1e-8 * sol.v2g.norm().max(1.0));
        prop_assert_eq!(sol.theta < PI, d1 == BranchFlag::Short);
        let energy = 0.5 * sol.v1g.norm_squared() - g().mu / r1.norm();
        let conic = if energy < 0.0 { Conic::Elliptic } else { Conic::Hyperbolic };
        if energy.abs() > 1e-6 {
            prop_assert_eq!(sol.conic, conic);
        }
        let other = solve_lambert(&r1, &r2, tof, match d1 { BranchFlag::Short => BranchFlag::Long, BranchFlag::Long => BranchFlag::Short }, g()).unwrap();
        prop_assert!((other.v1g - sol.v1g).norm() > 1e-6);
    }

    #[test]
    fn parabolic_arcs_have_zero_energy(r1 in position(), r2 in position(), d1 in branch()) {
        prop_assume!(angle_between(&r1, &r2).sin().abs() > 1e-3);
        let sol = match parabolic_lambert(&r1, &r2, d1, g()) {
            Ok(s) => s,
            Err(tiot_core::Error::NoParabolicConnection) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        for (r, v) in [(r1, sol.v1g), (r2, sol.v2g)] {
            let scale = g().mu / r.norm();
            prop_assert!((0.5 * v.norm_squared() - scale).abs() < 1e-10 * scale);
        }
        prop_assert_eq!(sol.conic, Conic::Parabolic);
        // both ends on the same parabola: same angular momentum
        let (h1, h2) = (r1.cross(&sol.v1g), r2.cross(&sol.v2g));
        prop_assert!((h1 - h2).norm() < 1e-9 * h1.norm());
    }

    #[test]
    fn fixed_plane_matches_branch(r1 in position(), phi in 0.05..(TAU - 0.05), s in 0.5..2.0f64, lt in 2.0..4.6f64) {
        prop_assume!((phi - PI).abs() > 0.05);
        // r2 in the plane normal to n = r1 x k, at angle phi from r1
        let k = Vector3::new(0.3, -0.4, 0.866).normalize();
        let n = r1.cross(&k).normalize();
        let u = r1.normalize();
        let w = n.cross(&u);
        let r2 = (u * phi.cos() + w * phi.sin()) * r1.norm() * s;
        let tof = 10f64.powf(lt);
        let fixed = solve_lambert_in(&r1, &r2, tof, TransferPlane::Fixed(n), g()).unwrap();
        let d1 = if phi < PI { BranchFlag::Short } else { BranchFlag::Long };
        let plain = solve_lambert(&r1, &r2, tof, d1, g()).unwrap();
        prop_assert!((fixed.theta - phi).abs() < 1e-9);
        prop_assert_eq!(fixed.d1, d1);
        prop_assert!((fixed.v1g - plain.v1g).norm() < 1e-9 * plain.v1g.norm());
        prop_assert!(r1.cross(&fixed.v1g).dot(&n) > 0.0);
    }
}

#[test]
fn fixed_plane_passes_through_pi() {
    let n = Vector3::z();
    let r1 = Vector3::new(9000.0, 0.0, 0.0);
    let r2 = Vector3::new(-8000.0, 0.0, 0.0);
    let sol = solve_lambert_in(&r1, &r2, 5000.0, TransferPlane::Fixed(n), g()).unwrap();
    assert!((sol.theta - PI).abs() < 1e-12);
    let f = propagate(&CartesianState::new(r1, sol.v1g), 5000.0, g()).unwrap();
    assert!((f.r - r2).norm() < 1e-8 * r2.norm());
    assert!(solve_lambert(&r1, &r2, 5000.0, BranchFlag::Short, g()).is_err());
    assert!(solve_lambert_in(&r1, &(r1 * 1.2), 5000.0, TransferPlane::Fixed(n), g()).is_err());
}

#[test]
fn semi_major_axis_varies_continuously_in_tof() {
    let r1 = Vector3::new(9000.0, 1000.0, 500.0);
    let r2 = Vector3::new(-2000.0, 7000.0, 3000.0);
    for d1 in [BranchFlag::Short, BranchFlag::Long] {
        let mut prev: Option<Vector3<f64>> = None;
        for k in 0..100 {
            let tof = 10.0 * (4.0e4f64 / 10.0).powf(k as f64 / 99.0);
            let sol = solve_lambert(&r1, &r2, tof, d1, g()).unwrap();
            let f = propagate(&CartesianState::new(r1, sol.v1g), tof, g()).unwrap();
            assert!((f.r - r2).norm() < 1e-8 * r2.norm());
            let energy = 0.5 * sol.v1g.norm_squared() - g().mu / r1.norm();
            assert!(energy.is_finite());
            if let Some(p) = prev {
                assert!((sol.v1g - p).norm() < 0.2 * p.norm(), "{d1:?} jump at tof {tof}");
            }
            prev = Some(sol.v1g);
        }
    }
}

#[test]
fn short_time_hyperbolic_long_time_near_parabolic() {
    let r1 = Vector3::new(9000.0, 1000.0, 500.0);
    let r2 = Vector3::new(-2000.0, 7000.0, 3000.0);
    for d1 in [BranchFlag::Short, BranchFlag::Long] {
        assert_eq!(solve_lambert(&r1, &r2, 30.0, d1, g()).unwrap().conic, Conic::Hyperbolic);
        let p = parabolic_lambert(&r1, &r2, d1, g()).unwrap();
        let gap = |t: f64| (solve_lambert(&r1, &r2, t, d1, g()).unwrap().v1g - p.v1g).norm();
        // the elliptic arc approaches the parabola as t^(-2/3)
        assert!(gap(1e6) < 0.2);
        assert!(gap(1e10) < 1e-3);
        assert!(gap(1e9) < gap(1e8) && gap(1e8) < gap(1e7));
    }
}

#[test]
fn bad_inputs() {
    let r1 = Vector3::new(9000.0, 0.0, 0.0);
    let r2 = Vector3::new(0.0, 9000.0, 0.0);
    assert!(solve_lambert(&r1, &r2, 0.0, BranchFlag::Short, g()).is_err());
    assert!(solve_lambert(&r1, &r2, f64::NAN, BranchFlag::Short, g()).is_err());
    assert!(solve_lambert(&r1, &(r1 * 2.0), 1000.0, BranchFlag::Short, g()).is_err());
}
