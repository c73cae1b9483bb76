// oracle constants are kept at the precision they were derived with
#![allow(clippy::excessive_precision)]

mod common;

use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;

use pdwalker::hybrid::{SimOptions, Walker};
use pdwalker::linalg::{skew_residual, sym2_eigenvalues};
use pdwalker::model::{self, ModelParams, State};
use pdwalker::outputs::{ControlLaw, GaitParams};

fn q_strategy() -> impl Strategy<Value = Vector2<f64>> {
    let h = std::f64::consts::FRAC_PI_2;
    (-h..h, -h..h).prop_map(|(a, b)| Vector2::new(a, b))
}

fn dq_strategy() -> impl Strategy<Value = Vector2<f64>> {
    (-5.0..5.0, -5.0..5.0).prop_map(|(a, b)| Vector2::new(a, b))
}

// Reference values from a symbolic kinetic-energy derivation of the three
// point masses, evaluated at the default parameters.
#[test]
fn inertia_with_legs_aligned_matches_symbolic_derivation() {
    let p = ModelParams::two_link();
    let d = model::inertia(&Vector2::new(0.0, 0.17), &p);
    let expect = Matrix2::new(0.0029767, 0.0057783, 0.0057783, 0.0394334);
    assert!((d - expect).abs().max() < 1e-15, "{d}");
}

#[test]
fn inertia_and_gravity_at_a_generic_configuration() {
    let p = ModelParams::two_link();
    let q = Vector2::new(0.3, -0.2);
    let d = model::inertia(&q, &p);
    let expect = Matrix2::new(
        0.0029767,
        0.0053872709622946809982,
        0.0053872709622946809982,
        0.040215458075410631666,
    );
    assert!((d - expect).abs().max() < 1e-15);
    let g = model::gravity_vector(&q, &p);
    assert!(
        (g - Vector2::new(0.082352410985213633787, 0.15052716269783167347))
            .abs()
            .max()
            < 1e-14
    );
}

#[test]
fn zero_gravity_removes_the_gravity_vector() {
    let p = ModelParams {
        gravity: 0.0,
        ..ModelParams::two_link()
    };
    assert_eq!(model::gravity_vector(&Vector2::new(0.4, -0.3), &p), Vector2::zeros());
}

#[test]
fn actuation_selectors() {
    let (b, bc) = model::actuation_matrix();
    assert_eq!(b.dot(&bc), 0.0);
    assert_eq!(b, Vector2::new(1.0, 0.0));
    let p = ModelParams::two_link();
    // hip torque enters only the q1 equation: with gravity and velocity off,
    // D q̈ = B u
    let x = State::new(0.2, 0.1, 0.0, 0.0);
    let p0 = ModelParams { gravity: 0.0, ..p };
    let acc = model::accelerations(&x, 1.0, &p0).unwrap();
    let rhs = model::inertia(&x.q, &p0) * acc;
    assert!((rhs - b).norm() < 1e-12);
}

#[test]
fn energy_at_rest_is_potential() {
    let p = ModelParams::two_link();
    let x = State::new(0.3, 0.1, 0.0, 0.0);
    assert_eq!(model::total_energy(&x, &p), model::potential_energy(&x.q, &p));
}

#[test]
fn conservative_swing_keeps_energy() {
    let p = ModelParams {
        gravity: 0.0,
        ..ModelParams::two_link()
    };
    let w = Walker::new(p, GaitParams::nominal(), ControlLaw::Passive, SimOptions::default());
    let x0 = State::new(0.3, -0.1, 1.5, -0.8);
    let e0 = model::total_energy(&x0, &p);
    let y = common::integrate(|_, y| w.vector_field(&State::from_array(y)), x0.to_array(), 1.0).unwrap();
    let e1 = model::total_energy(&State::from_array(&y), &p);
    assert!((e1 - e0).abs() < 1e-8, "{e0} -> {e1}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn inertia_symmetric_positive_definite(q in q_strategy()) {
        let d = model::inertia(&q, &ModelParams::two_link());
        prop_assert_eq!(d[(0, 1)], d[(1, 0)]);
        prop_assert!(sym2_eigenvalues(&d).0 > 0.0);
    }

    #[test]
    fn inertia_rate_minus_twice_coriolis_is_skew(q in q_strategy(), dq in dq_strategy()) {
        let p = ModelParams::two_link();
        let n = model::inertia_rate(&q, &dq, &p) - 2.0 * model::coriolis(&q, &dq, &p);
        prop_assert!(skew_residual(&n) < 1e-10);
    }

    #[test]
    fn inertia_rate_matches_finite_difference(q in q_strategy(), dq in dq_strategy()) {
        let p = ModelParams::two_link();
        let h = 1e-6;
        let fd = (model::inertia(&(q + dq * h), &p) - model::inertia(&(q - dq * h), &p)) / (2.0 * h);
        prop_assert!((fd - model::inertia_rate(&q, &dq, &p)).abs().max() < 1e-8);
    }

    #[test]
    fn coriolis_is_linear_in_velocity(q in q_strategy(), dq in dq_strategy(), s in -3.0..3.0f64) {
        let p = ModelParams::two_link();
        let a = model::coriolis(&q, &(dq * s), &p);
        let b = model::coriolis(&q, &dq, &p) * s;
        prop_assert!((a - b).abs().max() < 1e-14);
    }

    #[test]
    fn gravity_is_gradient_of_potential(q in q_strategy()) {
        let p = ModelParams::two_link();
        let h = 1e-6;
        let g = model::gravity_vector(&q, &p);
        for i in 0..2 {
            let mut dq = Vector2::zeros();
            dq[i] = h;
            let fd = (model::potential_energy(&(q + dq), &p) - model::potential_energy(&(q - dq), &p)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn energy_balance_of_the_dynamics(q in q_strategy(), dq in dq_strategy(), u in -5.0..5.0f64) {
        // dE/dt = q̇ᵀ(D q̈ + ½ Ḋ q̇ + G) must equal the hip power
        let p = ModelParams::two_link();
        let x = State { q, dq };
        let acc = model::accelerations(&x, u, &p).unwrap();
        let d = model::inertia(&q, &p);
        let rate = dq.dot(&(d * acc)) + 0.5 * dq.dot(&(model::inertia_rate(&q, &dq, &p) * dq))
            + dq.dot(&model::gravity_vector(&q, &p));
        prop_assert!((rate - dq[0] * u).abs() < 1e-9 * (1.0 + (dq[0] * u).abs()));
    }
}
