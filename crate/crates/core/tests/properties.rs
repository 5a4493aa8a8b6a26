use std::f64::consts::PI;

use proptest::prelude::*;

use nullcurve::constructions::{cy_constant, cy_schedule, orthogonal_null_direction, ZZSchedule};
use nullcurve::null::{c, herm, norm3, null_residual_of, pi_map, quad, spinor_lift, NullCurve, SpinorField, Vec3};
use nullcurve::period::{Field, QuadricMap};
use nullcurve::rh::direction_lift;
use nullcurve::transforms::{bryant_project, det, Mat2};
use nullcurve::{Domain, LaurentPoly, C64};

fn cplx(s: f64) -> impl Strategy<Value = C64> {
    (-s..s, -s..s).prop_map(|(a, b)| c(a, b))
}

fn poly(d: Domain, k: i64, len: usize) -> impl Strategy<Value = LaurentPoly> {
    prop::collection::vec(cplx(1.0), 1..=len).prop_map(move |cs| LaurentPoly::new(k, cs, d).unwrap())
}

fn vec3(s: f64) -> impl Strategy<Value = Vec3> {
    [cplx(s), cplx(s), cplx(s)]
}

fn on_circle(p: &LaurentPoly, t: f64) -> C64 {
    p.eval(C64::from_polar(1.0, t)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_evaluates_pointwise(a in poly(Domain::Annulus { inner: 0.5 }, -2, 5), b in poly(Domain::Annulus { inner: 0.5 }, -1, 4), t in 0.0..2.0 * PI) {
        let ab = a.mul(&b).unwrap();
        let want = on_circle(&a, t) * on_circle(&b, t);
        prop_assert!((on_circle(&ab, t) - want).norm() < 1e-12 * (1.0 + want.norm()));
    }

    #[test]
    fn antiderivative_inverts_derivative(a in poly(Domain::Disc, 0, 8), k in cplx(1.0)) {
        let back = a.antiderivative(k).unwrap().derivative();
        for j in 0..8 {
            prop_assert!((back.coeff(j) - a.coeff(j)).norm() < 1e-13);
        }
    }

    #[test]
    fn pi_norm_identity(u in cplx(2.0), v in cplx(2.0)) {
        let z = pi_map(u, v);
        let want = 2.0 * (u.norm_sqr() + v.norm_sqr()).powi(2);
        prop_assert!(quad(&z).norm() < 1e-12 * (1.0 + want));
        prop_assert!((norm3(&z).powi(2) - want).abs() < 1e-12 * (1.0 + want));
    }

    #[test]
    fn spinor_lift_roundtrip(u in poly(Domain::Disc, 0, 4), v in poly(Domain::Disc, 0, 4)) {
        // keep u zero-free on the closed disc
        let u = u.scale(c(0.3, 0.0)).add(&LaurentPoly::constant(c(3.0, 0.0), Domain::Disc)).unwrap();
        let s = SpinorField::new(u, v).unwrap();
        let phi = s.pi_poly().unwrap();
        let back = spinor_lift(&phi).unwrap().pi_poly().unwrap();
        for j in 0..3 {
            for k in 0..8 {
                prop_assert!((back[j].coeff(k) - phi[j].coeff(k)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn direction_lift_inverts_pi(u in cplx(1.0), v in cplx(1.0)) {
        prop_assume!(u.norm() + v.norm() > 0.1);
        let theta = pi_map(u, v);
        let (p, q) = direction_lift(&theta).unwrap();
        let back = pi_map(p, q);
        prop_assert!(norm3(&[back[0] - theta[0], back[1] - theta[1], back[2] - theta[2]]) < 1e-10);
    }

    #[test]
    fn orthogonal_direction_is_null_unit_and_orthogonal(w in vec3(1.0), seed in any::<u64>()) {
        prop_assume!(norm3(&w) > 1e-3);
        let th = orthogonal_null_direction(&w, seed).unwrap();
        prop_assert!((norm3(&th) - 1.0).abs() < 1e-12);
        prop_assert!(quad(&th).norm() < 1e-12);
        prop_assert!(herm(&th, &w).norm() < 1e-12 * norm3(&w));
    }

    #[test]
    fn flow_preserves_nullity_and_composes(u0 in cplx(0.2), v0 in cplx(0.5), u2 in cplx(0.3), s in cplx(0.3), t in cplx(0.3), field in 0usize..4) {
        let d = Domain::Annulus { inner: 0.5 };
        let u = LaurentPoly::from_terms(&[(0, c(1.0, 0.0) + u0), (2, u2)], d).unwrap();
        let v = LaurentPoly::from_terms(&[(0, v0), (-2, u2 * 0.1)], d).unwrap();
        let f = QuadricMap::new(SpinorField::new(u, v).unwrap().pi_poly().unwrap()).unwrap();
        let field = [Field::V0, Field::V12, Field::V13, Field::V23][field];
        let two = f.flow(field, s).flow(field, t);
        let one = f.flow(field, s + t);
        prop_assert!(null_residual_of(two.components()).unwrap() < 1e-12);
        for j in 0..3 {
            for k in -6..=6 {
                prop_assert!((two.components()[j].coeff(k) - one.components()[j].coeff(k)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cy_schedule_identities(r0 in 0.0..0.99f64, rho0 in 0.1..10.0f64, steps in 1usize..200) {
        let s = cy_schedule(r0, rho0, steps).unwrap();
        let cc = cy_constant(r0);
        prop_assert!((cc * cc * PI * PI / 6.0 - (1.0 - r0 * r0)).abs() < 1e-12);
        for n in 1..=steps {
            prop_assert!((s.r[n] * s.r[n] - s.r[n - 1] * s.r[n - 1] - (cc / n as f64).powi(2)).abs() < 1e-12);
            prop_assert!(s.rho[n] > s.rho[n - 1]);
            prop_assert!(s.r[n] < 1.0);
        }
    }

    #[test]
    fn unimodular_projects_to_hyperboloid(a in cplx(2.0), b in cplx(2.0), cc in cplx(2.0)) {
        prop_assume!(a.norm() > 0.2);
        // d is fixed by ad - bc = 1
        let d = (c(1.0, 0.0) + b * cc) / a;
        let m: Mat2 = [[a, b], [cc, d]];
        prop_assert!((det(&m) - 1.0).norm() < 1e-12);
        let x = bryant_project(&m).unwrap();
        prop_assert!(x.hyperboloid_residual() < 1e-12 * (1.0 + x.x0 * x.x0));
    }
}

#[test]
fn orthogonal_direction_of_third_axis() {
    let w = [c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut seen = Vec::new();
    for seed in 0..16 {
        let th = orthogonal_null_direction(&w, seed).unwrap();
        // unit null vectors in the 12-plane are phases of (1, +-i, 0)/sqrt 2
        let phase = th[0] / s;
        assert_close(phase.norm(), 1.0);
        let sign = (th[1] / (th[0] * c(0.0, 1.0))).re.signum();
        assert_close(th[2].norm(), 0.0);
        seen.push(sign);
    }
    assert!(seen.contains(&1.0) && seen.contains(&-1.0));
    assert!(orthogonal_null_direction(&[c(0.0, 0.0); 3], 0).is_err());
}

fn assert_close(a: f64, b: f64) {
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn zz_schedule_rejects_slow_decay_and_overspent_budget() {
    assert!(ZZSchedule::new(1.0, vec![1.0, 0.6], 10.0, 0.0).is_err());
    assert!(ZZSchedule::new(1.0, vec![1.0, 0.4], 0.3, 0.0).is_err());
    let s = ZZSchedule::new(1.0, vec![1.0, 0.4, 0.1], 1.0, 0.0).unwrap();
    assert_eq!(s.steps(), 2);
    assert_eq!(s.s, vec![1.0, 2.0, 3.0]);
}

#[test]
fn integrate_then_null_residual_is_exact_for_lines() {
    let phi = [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)].map(|x| LaurentPoly::constant(x, Domain::Disc));
    let f = NullCurve::integrate([c(0.0, 0.0); 3], phi).unwrap();
    assert_eq!(f.null_residual().unwrap(), 0.0);
}
