mod common;

use pdwalker::hybrid::{SimOptions, Walker};
use pdwalker::hzd::{from_transformed, to_transformed};
use pdwalker::model::ModelParams;
use pdwalker::outputs::{ControlLaw, Gains};
use pdwalker::verify::{
    all_passed, energy_rate, hzd_checks, impact_checks, mechanics_suite, passivity_check, passivity_error,
    path_lambda_min, random_states, tube_states, ENERGY_STENCIL,
};

#[test]
fn mechanics_suite_passes_for_the_walker() {
    let p = ModelParams::two_link();
    let checks = mechanics_suite(&p, common::calibrated(), 10_000, 1).unwrap();
    for c in &checks {
        assert!(c.passed, "{c}");
    }
    assert!(checks.len() >= 10);
}

#[test]
fn samplers_stay_in_their_boxes() {
    for x in random_states(200, 3) {
        assert!(x.q.iter().all(|v| v.abs() <= std::f64::consts::FRAC_PI_2));
        assert!(x.dq.iter().all(|v| v.abs() <= 5.0));
    }
    let g = common::calibrated();
    for x in tube_states(200, 3, g) {
        assert!((x.q[0] - g.desired_in_q2(x.q[1]).0).abs() <= 0.3);
    }
}

#[test]
fn zero_dynamics_checks_pass() {
    let checks = hzd_checks(common::orbit(), 1e-6, &SimOptions::default());
    assert!(all_passed(&checks), "{checks:#?}");
}

#[test]
fn desired_path_satisfies_the_output_assumption_until_exaggerated() {
    let p = ModelParams::two_link();
    let g = common::calibrated();
    let (lam, bp) = path_lambda_min(g, &p, 500).unwrap();
    assert!(lam > 0.0 && bp > 0.5);
    let (lam50, _) = path_lambda_min(&g.scaled(50.0), &p, 500).unwrap();
    assert!(lam50 < 0.0);
}

#[test]
fn energy_rate_equals_hip_power_along_swings() {
    let o = common::orbit();
    let mut ts = to_transformed(&o.post_impact_state().unwrap(), &o.gait, &o.model);
    ts.e += 0.4;
    let x0 = from_transformed(&ts, &o.gait, &o.model).unwrap();
    for eps in [10.0, 20.0, 40.0] {
        let w = Walker::new(
            o.model,
            o.gait,
            ControlLaw::Pd(Gains::new(eps, 2.0).unwrap()),
            SimOptions::default(),
        );
        let steps = w.walk(&x0, 3).unwrap();
        let c = passivity_check(&w, &steps);
        assert!(c.passed, "{c}");
        assert!(impact_checks(&[&steps], &o.model, &w.opts).iter().all(|c| c.passed));
    }
}

#[test]
fn passivity_oracle_detects_a_wrong_power() {
    // the stencil is an independent measurement: doubling the torque in the
    // comparison must be caught
    let o = common::orbit();
    let w = Walker::new(
        o.model,
        o.gait,
        ControlLaw::Pd(Gains::new(10.0, 2.0).unwrap()),
        SimOptions::default(),
    );
    let mut step = w.walk(&o.post_impact_state().unwrap(), 1).unwrap().remove(0);
    assert!(passivity_error(&w, &step.trace).unwrap().unwrap() < 1e-5);
    for s in &mut step.trace {
        s.u *= 2.0;
    }
    assert!(passivity_error(&w, &step.trace).unwrap().unwrap() > 0.1);
    let x = step.trace[step.trace.len() / 2].x;
    let exact = w.torque(&x).unwrap() * x.dq[0];
    assert!((energy_rate(&w, &x, ENERGY_STENCIL).unwrap() - exact).abs() < 1e-8);
}
