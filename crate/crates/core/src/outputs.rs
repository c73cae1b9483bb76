//! Phase variable, desired hip trajectory, tracking errors and control laws.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::model::{self, ModelParams, State};
use crate::{Error, Result};

/// Coefficients of the nominal gait, `ζ_0 … ζ_5`.
pub const NOMINAL_ZETA: [f64; 6] = [0.5753, 3.1632, 0.3115, -0.0570, -1.9988, -0.5753];

/// Desired-trajectory polynomial and phase endpoints.
///
/// `q^a_d(τ) = Σ_j ζ_j τ^(5-j) (1-τ)^j` with `τ = (q2 - q0)/(qf - q0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitParams {
    pub zeta: [f64; 6],
    pub q0: f64,
    pub qf: f64,
}

impl GaitParams {
    /// Nominal coefficients with the level-ground double-support endpoints
    /// `qf = q^a_d(1)/2`, `q0 = -qf`.
    pub fn nominal() -> Self {
        let qf = NOMINAL_ZETA[0] / 2.0;
        Self {
            zeta: NOMINAL_ZETA,
            q0: -qf,
            qf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.zeta.iter().all(|z| z.is_finite()) {
            return Err(Error::invalid("gait.zeta must be finite"));
        }
        if !(self.q0.is_finite() && self.qf.is_finite()) {
            return Err(Error::invalid("gait.q0 and gait.qf must be finite"));
        }
        if self.q0 == self.qf {
            return Err(Error::invalid("gait.q0 must differ from gait.qf"));
        }
        Ok(())
    }

    /// Same phase endpoints with every coefficient multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            zeta: self.zeta.map(|z| z * s),
            ..*self
        }
    }

    /// `(τ, dτ/dq2)`. Not clamped: outside `[0, 1]` the polynomial extrapolates.
    pub fn phase(&self, q2: f64) -> (f64, f64) {
        let span = self.qf - self.q0;
        ((q2 - self.q0) / span, 1.0 / span)
    }

    /// `(q^a_d, dq^a_d/dτ, d²q^a_d/dτ²)`.
    pub fn desired(&self, tau: f64) -> (f64, f64, f64) {
        let s = 1.0 - tau;
        // powers τ^k and (1-τ)^k, k = 0..5
        let mut tp = [1.0; 6];
        let mut sp = [1.0; 6];
        for k in 1..6 {
            tp[k] = tp[k - 1] * tau;
            sp[k] = sp[k - 1] * s;
        }
        let pw = |arr: &[f64; 6], k: i32| if k < 0 { 0.0 } else { arr[k as usize] };
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for (j, &z) in self.zeta.iter().enumerate() {
            let a = (5 - j) as i32;
            let b = j as i32;
            let (af, bf) = (a as f64, b as f64);
            v += z * pw(&tp, a) * pw(&sp, b);
            // d/dτ [τ^a s^b] = a τ^(a-1) s^b - b τ^a s^(b-1)
            d1 += z * (af * pw(&tp, a - 1) * pw(&sp, b) - bf * pw(&tp, a) * pw(&sp, b - 1));
            d2 += z
                * (af * (af - 1.0) * pw(&tp, a - 2) * pw(&sp, b) - 2.0 * af * bf * pw(&tp, a - 1) * pw(&sp, b - 1)
                    + bf * (bf - 1.0) * pw(&tp, a) * pw(&sp, b - 2));
        }
        (v, d1, d2)
    }

    /// Desired hip angle and its first two derivatives with respect to `q2`.
    pub fn desired_in_q2(&self, q2: f64) -> (f64, f64, f64) {
        let (tau, k) = self.phase(q2);
        let (v, d1, d2) = self.desired(tau);
        (v, d1 * k, d2 * k * k)
    }
}

impl Default for GaitParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// PD gain pair `(ε, k)`; `k_p = ε²`, `k_d = εk`, `k₀ = ε/k` are always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub epsilon: f64,
    pub k: f64,
}

impl Gains {
    pub fn new(epsilon: f64, k: f64) -> Result<Self> {
        let g = Self { epsilon, k };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 1.0 && self.k.is_finite() && self.k > 1.0) {
            return Err(Error::invalid(format!(
                "gains need epsilon > 1 and k > 1, got ({}, {})",
                self.epsilon, self.k
            )));
        }
        Ok(())
    }

    pub fn kp(&self) -> f64 {
        self.epsilon * self.epsilon
    }

    pub fn kd(&self) -> f64 {
        self.epsilon * self.k
    }

    pub fn k0(&self) -> f64 {
        self.epsilon / self.k
    }
}

/// Tracking error `(e, ė)` with `e = q1 - q^a_d(τ(q2))`.
pub fn output_error(x: &State, gait: &GaitParams) -> (f64, f64) {
    let (qd, dqd, _) = gait.desired_in_q2(x.q[1]);
    (x.q[0] - qd, x.dq[0] - dqd * x.dq[1])
}

/// Model-independent PD law `u = -Jᵀk_p e - Jᵀk_d ė` with `J = 1`.
pub fn pd_control(x: &State, gait: &GaitParams, gains: &Gains) -> f64 {
    let (e, edot) = output_error(x, gait);
    -gains.kp() * e - gains.kd() * edot
}

/// Lie-derivative terms of the output: `ÿ = L_f²y + L_gL_f y · u`.
pub fn output_lie_terms(x: &State, gait: &GaitParams, p: &ModelParams) -> Result<(f64, f64)> {
    let (_, dqd, ddqd) = gait.desired_in_q2(x.q[1]);
    let d = model::inertia(&x.q, p);
    let d_inv = d.try_inverse().ok_or(Error::Singular("inertia matrix"))?;
    let (b, _) = model::actuation_matrix();
    let drift = -(model::coriolis(&x.q, &x.dq, p) * x.dq) - model::gravity_vector(&x.q, p);
    let dy = Vector2::new(1.0, -dqd);
    let lf2 = dy.dot(&(d_inv * drift)) - ddqd * x.dq[1] * x.dq[1];
    let lglf = dy.dot(&(d_inv * b));
    Ok((lf2, lglf))
}

pub const DECOUPLING_MIN: f64 = 1e-9;

/// Input–output linearizing law `u = (L_gL_f y)⁻¹(-L_f²y - 2εẏ - ε²y)`.
pub fn fblin_control(x: &State, gait: &GaitParams, epsilon: f64, p: &ModelParams) -> Result<f64> {
    let (lf2, lglf) = output_lie_terms(x, gait, p)?;
    fblin_from_terms(x, gait, epsilon, lf2, lglf)
}

fn fblin_from_terms(x: &State, gait: &GaitParams, epsilon: f64, lf2: f64, lglf: f64) -> Result<f64> {
    if lglf.abs() < DECOUPLING_MIN {
        return Err(Error::Singular("decoupling matrix L_gL_f y"));
    }
    let (y, ydot) = output_error(x, gait);
    Ok((-lf2 - 2.0 * epsilon * ydot - epsilon * epsilon * y) / lglf)
}

/// Closed-loop torque law applied during the swing phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlLaw {
    /// No actuation.
    Passive,
    Pd(Gains),
    FeedbackLinearizing {
        epsilon: f64,
    },
}

impl ControlLaw {
    pub fn torque(&self, x: &State, gait: &GaitParams, p: &ModelParams) -> Result<f64> {
        match self {
            ControlLaw::Passive => Ok(0.0),
            ControlLaw::Pd(g) => Ok(pd_control(x, gait, g)),
            ControlLaw::FeedbackLinearizing { epsilon } => fblin_control(x, gait, *epsilon, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_eval(zeta: &[f64; 6], tau: f64) -> f64 {
        (0..6)
            .map(|j| zeta[j] * tau.powi(5 - j as i32) * (1.0 - tau).powi(j as i32))
            .sum()
    }

    #[test]
    fn phase_endpoints() {
        let g = GaitParams::nominal();
        assert_eq!(g.phase(g.q0).0, 0.0);
        assert_eq!(g.phase(g.qf).0, 1.0);
        assert!((g.phase(0.5 * (g.q0 + g.qf)).0 - 0.5).abs() < 1e-15);
        assert_eq!(g.phase(0.0).1, 1.0 / (g.qf - g.q0));
    }

    #[test]
    fn polynomial_boundary_and_midpoint() {
        let g = GaitParams::nominal();
        assert!((g.desired(0.0).0 - (-0.5753)).abs() < 1e-12);
        assert!((g.desired(1.0).0 - 0.5753).abs() < 1e-12);
        let mid = g.desired(0.5).0;
        assert!((mid - direct_eval(&NOMINAL_ZETA, 0.5)).abs() < 1e-15);
        assert!((mid - 0.5f64.powi(5) * NOMINAL_ZETA.iter().sum::<f64>()).abs() < 1e-15);
        assert!((mid - 0.044340625).abs() < 1e-15);
    }

    #[test]
    fn default_gait_is_antisymmetric_at_the_ends() {
        let g = GaitParams::nominal();
        assert!((g.desired(0.0).0 + g.desired(1.0).0).abs() < 1e-12);
    }

    #[test]
    fn pd_examples() {
        let g = GaitParams::nominal();
        let gains = Gains::new(10.0, 2.0).unwrap();
        assert_eq!((gains.kp(), gains.kd(), gains.k0()), (100.0, 20.0, 5.0));
        let (qd, dqd, _) = g.desired_in_q2(0.1);
        let on = State::new(qd, 0.1, dqd * 0.8, 0.8);
        let (e, ed) = output_error(&on, &g);
        assert!(e.abs() < 1e-15 && ed.abs() < 1e-15);
        assert!(pd_control(&on, &g, &gains).abs() < 1e-12);

        let off = State::new(qd + 0.1, 0.1, 0.0, 0.0);
        assert!((pd_control(&off, &g, &gains) + 10.0).abs() < 1e-12);
        let fast = State::new(qd, 0.1, 0.5, 0.0);
        assert!((pd_control(&fast, &g, &gains) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_velocity_zero_error_rate() {
        let g = GaitParams::nominal();
        for q2 in [-0.3, 0.0, 0.17] {
            assert_eq!(output_error(&State::new(0.4, q2, 0.0, 0.0), &g).1, 0.0);
        }
    }

    #[test]
    fn gains_must_exceed_one() {
        assert!(Gains::new(1.0, 2.0).is_err());
        assert!(Gains::new(5.0, 0.5).is_err());
        assert!(Gains::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn invalid_gait_rejected() {
        let g = GaitParams {
            q0: 0.2,
            qf: 0.2,
            ..GaitParams::nominal()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn fblin_singularity_is_reported() {
        let g = GaitParams::nominal();
        let x = State::new(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            fblin_from_terms(&x, &g, 10.0, 1.0, 0.0),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn fblin_zero_output_gives_zero_output_acceleration() {
        let p = ModelParams::two_link();
        let g = GaitParams::nominal();
        let (qd, dqd, _) = g.desired_in_q2(0.05);
        let x = State::new(qd, 0.05, dqd * 1.2, 1.2);
        let u = fblin_control(&x, &g, 10.0, &p).unwrap();
        let (lf2, lglf) = output_lie_terms(&x, &g, &p).unwrap();
        assert!((lf2 + lglf * u).abs() < 1e-10);
    }
}
