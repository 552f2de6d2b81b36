use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;
use proptest::prelude::*;
use tiot_core::kepler::*;

fn g() -> GravModel {
    GravModel::earth()
}

fn orbit() -> impl Strategy<Value = ClassicalElements> {
    (7000.0..40000.0f64, 0.0..0.9f64, 0.0..PI, 0.0..TAU, 0.0..TAU)
        .prop_map(|(a, e, i, raan, argp)| ClassicalElements::new(a, e, i, raan, argp, 0.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kepler_inverts(m in -20.0..20.0f64, e in 0.0..0.95f64) {
        let ea = solve_kepler(m, e).unwrap();
        let back = ea - e * ea.sin();
        prop_assert!((back - m).abs() < 1e-12, "m = {m}, e = {e}, back = {back}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn states_have_orbit_energy(el in orbit(), m in 0.0..TAU) {
        let s = elements_to_state(&el, m, g()).unwrap();
        let want = -g().mu / (2.0 * el.a);
        prop_assert!((s.energy(g()) - want).abs() < 1e-10 * want.abs());
        let h = s.angular_momentum();
        prop_assert!((h.normalize() - el.angular_momentum_dir()).norm() < 1e-12);
    }

    #[test]
    fn propagation_conserves_integrals(el in orbit(), m in 0.0..TAU, frac in 0.0..5.0f64) {
        let s = elements_to_state(&el, m, g()).unwrap();
        let dt = frac * el.period(g());
        let (f, _) = propagate_with_stm(&s, dt, g()).unwrap();
        let (e0, e1) = (s.energy(g()), f.energy(g()));
        prop_assert!((e1 - e0).abs() < 1e-10 * e0.abs());
        let (h0, h1) = (s.angular_momentum(), f.angular_momentum());
        prop_assert!((h1 - h0).norm() < 1e-10 * h0.norm());
        let want = elements_to_state(&el, m + mean_motion(&el, g()) * dt, g()).unwrap();
        prop_assert!((f.r - want.r).norm() < 1e-9 * want.r.norm());
    }

    #[test]
    fn mean_anomaly_derivatives_match_fd(el in orbit(), m in 0.0..TAU) {
        let (dr, dv) = state_derivs_wrt_mean_anomaly(&el, m, g()).unwrap();
        let h = 1e-7;
        let p = elements_to_state(&el, m + h, g()).unwrap();
        let q = elements_to_state(&el, m - h, g()).unwrap();
        let fr = (p.r - q.r) / (2.0 * h);
        let fv = (p.v - q.v) / (2.0 * h);
        prop_assert!((dr - fr).norm() < 1e-6 * dr.norm());
        prop_assert!((dv - fv).norm() < 1e-6 * dv.norm());
    }

    // rounding alone gives a defect near eps * max|phi|^2, which reaches 1e-9
    // around e ~ 0.65 over five periods
    #[test]
    fn stm_is_symplectic_over_five_periods(el in orbit(), m in 0.0..TAU, frac in 0.0..5.0f64) {
        prop_assume!(el.e <= 0.6);
        let s = elements_to_state(&el, m, g()).unwrap();
        let (_, stm) = propagate_with_stm(&s, frac * el.period(g()), g()).unwrap();
        let lu = el.a;
        let tu = (lu.powi(3) / g().mu).sqrt();
        prop_assert!(stm.symplectic_defect(lu, tu) <= 1e-9);
    }
}

#[test]
fn kepler_against_fixed_point_oracle() {
    let (m, e) = (FRAC_PI_2, 0.1);
    let mut x = m;
    for _ in 0..200 {
        x = m + e * x.sin();
    }
    let ea = solve_kepler(m, e).unwrap();
    assert!((ea - x).abs() < 1e-14);
    assert!((ea - 1.6703).abs() < 5e-5);
    assert_eq!(solve_kepler(0.0, 0.5).unwrap(), 0.0);
    assert_eq!(solve_kepler(FRAC_PI_2, 0.0).unwrap(), FRAC_PI_2);
    assert!(solve_kepler(1.0, 1.0).is_err());
}

#[test]
fn mean_motion_and_periods() {
    let el = ClassicalElements::new(10000.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
    let n = mean_motion(&el, g());
    assert!((n - 6.3135e-4).abs() < 5e-8);
    assert!((TAU / n - el.period(g())).abs() < 1e-9);
    let far = ClassicalElements { a: 40000.0, ..el };
    assert!((mean_motion(&far, g()) - n / 8.0).abs() < 1e-18);
    let geo = ClassicalElements { a: 42164.17, ..el };
    assert!((geo.period(g()) - 86164.0).abs() < 10.0);
}

#[test]
fn circular_orbit_derivatives() {
    let el = ClassicalElements::new(10000.0, 0.0, 0.3, 0.2, 0.1, 0.0).unwrap();
    for m in [0.0, 1.0, 4.0] {
        let s = elements_to_state(&el, m, g()).unwrap();
        let (dr, _) = state_derivs_wrt_mean_anomaly(&el, m, g()).unwrap();
        assert!((dr.norm() - el.a).abs() < 1e-9 * el.a);
        assert!(dr.normalize().cross(&s.v.normalize()).norm() < 1e-12);
    }
    let eq = ClassicalElements::new(10000.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
    let s = elements_to_state(&eq, FRAC_PI_2, g()).unwrap();
    assert!((s.r - Vector3::new(0.0, 10000.0, 0.0)).norm() < 1e-9);
    let per = elements_to_state(&ClassicalElements { e: 0.1, ..eq }, 0.0, g()).unwrap();
    assert!((per.r.norm() - 9000.0).abs() < 1e-9);
}

#[test]
fn circular_period_returns() {
    let el = ClassicalElements::new(12000.0, 0.0, 0.4, 0.0, 0.0, 0.0).unwrap();
    let s = elements_to_state(&el, 0.3, g()).unwrap();
    let f = propagate(&s, el.period(g()), g()).unwrap();
    assert!((f.r - s.r).norm() < 1e-9 * s.r.norm());
}

#[test]
fn phi_rv_matches_fd_and_integrator() {
    let el = ClassicalElements::new(9000.0, 0.25, 0.6, 1.0, 2.0, 0.0).unwrap();
    let s = elements_to_state(&el, 1.3, g()).unwrap();
    for dt in [1000.0, 7000.0, 3.0 * el.period(g())] {
        let (_, stm) = propagate_with_stm(&s, dt, g()).unwrap();
        let rv = stm.rv();
        let h = 1e-6;
        for k in 0..3 {
            let mut dv = Vector3::zeros();
            dv[k] = h;
            let p = propagate(&CartesianState::new(s.r, s.v + dv), dt, g()).unwrap();
            let q = propagate(&CartesianState::new(s.r, s.v - dv), dt, g()).unwrap();
            let col = (p.r - q.r) / (2.0 * h);
            assert!((col - rv.column(k)).norm() < 1e-5 * rv.column(k).norm(), "dt = {dt}, k = {k}");
        }
        let (_, oracle) = integrate_with_stm(&s, dt, g(), 1e-13).unwrap();
        assert!((oracle.phi - stm.phi).amax() < 1e-6 * stm.phi.amax(), "dt = {dt}");
    }
}

#[test]
fn angle_helpers() {
    assert_eq!(wrap_2pi(-0.5), TAU - 0.5);
    assert_eq!(wrap_2pi(TAU), 0.0);
    assert!((angle_diff(0.1, TAU - 0.1) - 0.2).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // escape speed factor from just above 1 into the strongly hyperbolic regime
    #[test]
    fn hyperbolic_propagation_is_consistent(
        el in orbit(),
        m in 0.0..TAU,
        boost in 1.05..8.0f64,
        tilt in -0.5..0.5f64,
        dt in 10.0..20000.0f64,
    ) {
        let s = elements_to_state(&el, m, g()).unwrap();
        let vesc = (2.0 * g().mu / s.r.norm()).sqrt();
        let dir = (s.v.normalize() + s.r.normalize() * tilt).normalize();
        let s0 = CartesianState::new(s.r, dir * vesc * boost);
        let f = propagate(&s0, dt, g()).unwrap();
        let (e0, e1) = (s0.energy(g()), f.energy(g()));
        prop_assert!((e1 - e0).abs() < 1e-10 * e0.abs());
        let (h0, h1) = (s0.angular_momentum(), f.angular_momentum());
        prop_assert!((h1 - h0).norm() < 1e-10 * h0.norm());
        let b = propagate(&f, -dt, g()).unwrap();
        prop_assert!((b.r - s0.r).norm() < 1e-9 * s0.r.norm());
        let (fa, stm) = propagate_with_stm(&s0, dt, g()).unwrap();
        prop_assert!((fa.r - f.r).norm() < 1e-12 * f.r.norm());
        let (fo, oracle) = integrate_with_stm(&s0, dt, g(), 1e-13).unwrap();
        prop_assert!((fo.r - f.r).norm() < 1e-8 * f.r.norm());
        prop_assert!((oracle.phi - stm.phi).amax() < 1e-6 * stm.phi.amax());
    }
}

#[test]
fn fast_radial_hyperbola() {
    // periapsis of a few hundred metres: the universal-variable form cancels here
    let r1 = Vector3::new(-15489.512785308032, -16007.748870606243, 0.0);
    let v1 = Vector3::new(2432.6478761846997, 2514.035354393168, 0.0);
    let s0 = CartesianState::new(r1, v1);
    let f = propagate(&s0, 10.0, g()).unwrap();
    let b = propagate(&f, -10.0, g()).unwrap();
    assert!((b.r - r1).norm() < 1e-9 * r1.norm());
    let mut st = s0;
    for _ in 0..10 {
        st = propagate(&st, 1.0, g()).unwrap();
    }
    assert!((st.r - f.r).norm() < 1e-9 * f.r.norm());
    let (o, _) = integrate_with_stm(&s0, 10.0, g(), 1e-14).unwrap();
    assert!((o.r - f.r).norm() < 1e-9 * f.r.norm());
}
