//! Euler–Lagrange model of the planar two-link walker with point feet.
//!
//! Coordinates are `q = (q1, q2)`: `q1` is the angle between the legs (the hip
//! joint, actuated) and `q2` is the stance-leg angle measured counterclockwise
//! from the vertical (unactuated at the point foot). The swing leg's absolute
//! angle is `q2 - q1`. Each leg is a point mass `m_leg` at distance `l_c` from
//! its foot; the hip carries a point mass `m_hip`. The stance foot is pinned at
//! the origin during the swing phase.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Physical constants of the two-link walker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Mass of each leg (kg).
    pub m_leg: f64,
    /// Hip point mass (kg).
    pub m_hip: f64,
    /// Leg length (m).
    pub l: f64,
    /// Distance of the leg mass from the foot, along the leg (m).
    pub l_c: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Downhill inclination of the walking surface (rad); zero is flat ground.
    #[serde(default)]
    pub slope: f64,
}

impl ModelParams {
    /// Reference two-link walker parameters with the default slope.
    pub fn two_link() -> Self {
        Self {
            m_leg: 0.103,
            m_hip: 0.068,
            l: 0.5,
            l_c: 0.33,
            gravity: 9.81,
            slope: DEFAULT_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_leg", self.m_leg),
            ("m_hip", self.m_hip),
            ("l", self.l),
            ("l_c", self.l_c),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("model.{name} must be finite and > 0, got {v}")));
            }
        }
        // gravity = 0 is allowed for conservative-system checks
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(Error::invalid(format!(
                "model.gravity must be finite and >= 0, got {}",
                self.gravity
            )));
        }
        if self.l_c > self.l {
            return Err(Error::invalid(format!(
                "model.l_c ({}) must not exceed model.l ({})",
                self.l_c, self.l
            )));
        }
        if !(self.slope.is_finite() && self.slope.abs() < std::f64::consts::FRAC_PI_4) {
            return Err(Error::invalid(format!(
                "model.slope must be finite and |slope| < pi/4, got {}",
                self.slope
            )));
        }
        Ok(())
    }

    /// Distance from the hip to a leg mass.
    #[inline]
    pub fn hip_to_com(&self) -> f64 {
        self.l - self.l_c
    }

    pub fn total_mass(&self) -> f64 {
        2.0 * self.m_leg + self.m_hip
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::two_link()
    }
}

/// Ground inclination used by [`ModelParams::two_link`].
///
/// With the printed gait the zero dynamics on level ground gains far too
/// little energy per step to carry the stance leg past vertical, so no
/// periodic gait exists there. A mild downhill grade supplies that energy.
pub const DEFAULT_SLOPE: f64 = 0.1;

/// Configuration/velocity pair `x = (q, q̇)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub q: Vector2<f64>,
    pub dq: Vector2<f64>,
}

impl State {
    pub fn new(q1: f64, q2: f64, dq1: f64, dq2: f64) -> Self {
        Self {
            q: Vector2::new(q1, q2),
            dq: Vector2::new(dq1, dq2),
        }
    }

    pub fn from_array(y: &[f64; 4]) -> Self {
        Self::new(y[0], y[1], y[2], y[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.q[0], self.q[1], self.dq[0], self.dq[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }
}

/// Index of the inter-leg angle in `q`.
pub const Q_ACTUATED: usize = 0;
/// Index of the stance angle in `q`.
pub const Q_UNACTUATED: usize = 1;

/// Inertia matrix `D(q)`.
pub fn inertia(q: &Vector2<f64>, p: &ModelParams) -> Matrix2<f64> {
    let (m, a, l) = (p.m_leg, p.hip_to_com(), p.l);
    let c1 = q[0].cos();
    let d11 = m * a * a;
    let d12 = m * a * (l * c1 - a);
    let d22 = m * p.l_c * p.l_c + (p.m_hip + m) * l * l + m * a * a - 2.0 * m * l * a * c1;
    Matrix2::new(d11, d12, d12, d22)
}

/// Partial derivatives `∂D/∂q_i`, `i = 0, 1`.
pub fn inertia_partials(q: &Vector2<f64>, p: &ModelParams) -> [Matrix2<f64>; 2] {
    let (m, a, l) = (p.m_leg, p.hip_to_com(), p.l);
    let s1 = q[0].sin();
    [
        Matrix2::new(0.0, -m * a * l * s1, -m * a * l * s1, 2.0 * m * l * a * s1),
        Matrix2::zeros(),
    ]
}

/// `Ḋ(q, q̇) = Σ_i ∂D/∂q_i q̇_i`.
pub fn inertia_rate(q: &Vector2<f64>, dq: &Vector2<f64>, p: &ModelParams) -> Matrix2<f64> {
    let dd = inertia_partials(q, p);
    dd[0] * dq[0] + dd[1] * dq[1]
}

/// Coriolis–centrifugal matrix from the Christoffel symbols of `D`.
///
/// `C_kj = Σ_i ½ (∂D_kj/∂q_i + ∂D_ki/∂q_j − ∂D_ij/∂q_k) q̇_i`, which makes
/// `Ḋ − 2C` skew-symmetric identically.
pub fn coriolis(q: &Vector2<f64>, dq: &Vector2<f64>, p: &ModelParams) -> Matrix2<f64> {
    let dd = inertia_partials(q, p);
    let mut c = Matrix2::zeros();
    for k in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for i in 0..2 {
                acc += 0.5 * (dd[i][(k, j)] + dd[j][(k, i)] - dd[k][(i, j)]) * dq[i];
            }
            c[(k, j)] = acc;
        }
    }
    c
}

/// Potential energy `U(q)` of the three point masses (height measured along gravity).
pub fn potential_energy(q: &Vector2<f64>, p: &ModelParams) -> f64 {
    let (q1, q2) = (q[0], q[1]);
    let a = p.hip_to_com();
    p.gravity * ((p.m_leg * p.l_c + p.m_hip * p.l + p.m_leg * p.l) * q2.cos() - p.m_leg * a * (q2 - q1).cos())
}

/// Gravity vector `G(q) = ∂U/∂q`.
pub fn gravity_vector(q: &Vector2<f64>, p: &ModelParams) -> Vector2<f64> {
    let (q1, q2) = (q[0], q[1]);
    let a = p.hip_to_com();
    let s21 = (q2 - q1).sin();
    Vector2::new(
        -p.gravity * p.m_leg * a * s21,
        p.gravity * (-(p.m_leg * p.l_c + p.m_hip * p.l + p.m_leg * p.l) * q2.sin() + p.m_leg * a * s21),
    )
}

/// Torque selector `B` (hip, acting on `q1`) and its complement `B_c` (stance, `q2`).
pub fn actuation_matrix() -> (Vector2<f64>, Vector2<f64>) {
    (Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0))
}

pub fn kinetic_energy(x: &State, p: &ModelParams) -> f64 {
    0.5 * x.dq.dot(&(inertia(&x.q, p) * x.dq))
}

/// `½ q̇ᵀ D(q) q̇ + U(q)`.
pub fn total_energy(x: &State, p: &ModelParams) -> f64 {
    kinetic_energy(x, p) + potential_energy(&x.q, p)
}

/// Joint accelerations from `D q̈ + C q̇ + G = B u`.
pub fn accelerations(x: &State, u: f64, p: &ModelParams) -> Result<Vector2<f64>> {
    let d = inertia(&x.q, p);
    let c = coriolis(&x.q, &x.dq, p);
    let g = gravity_vector(&x.q, p);
    let (b, _) = actuation_matrix();
    let rhs = b * u - c * x.dq - g;
    d.lu().solve(&rhs).ok_or(Error::Singular("inertia matrix"))
}

/// World positions (stance foot at the origin) of the point masses and the swing foot.
#[derive(Debug, Clone, Copy)]
pub struct Points {
    pub stance_com: Vector2<f64>,
    pub hip: Vector2<f64>,
    pub swing_com: Vector2<f64>,
    pub swing_foot: Vector2<f64>,
}

/// Jacobians `∂p/∂q` (columns `q1`, `q2`) matching [`Points`].
#[derive(Debug, Clone, Copy)]
pub struct PointJacobians {
    pub stance_com: Matrix2<f64>,
    pub hip: Matrix2<f64>,
    pub swing_com: Matrix2<f64>,
    pub swing_foot: Matrix2<f64>,
}

fn axis(theta: f64) -> Vector2<f64> {
    Vector2::new(-theta.sin(), theta.cos())
}

fn axis_rate(theta: f64) -> Vector2<f64> {
    Vector2::new(-theta.cos(), -theta.sin())
}

pub fn points(q: &Vector2<f64>, p: &ModelParams) -> Points {
    let (q1, q2) = (q[0], q[1]);
    let a = p.hip_to_com();
    let hip = axis(q2) * p.l;
    Points {
        stance_com: axis(q2) * p.l_c,
        hip,
        swing_com: hip - axis(q2 - q1) * a,
        swing_foot: hip - axis(q2 - q1) * p.l,
    }
}

pub fn point_jacobians(q: &Vector2<f64>, p: &ModelParams) -> PointJacobians {
    let (q1, q2) = (q[0], q[1]);
    let a = p.hip_to_com();
    let ds = axis_rate(q2);
    let dw = axis_rate(q2 - q1);
    let cols = |c1: Vector2<f64>, c2: Vector2<f64>| Matrix2::from_columns(&[c1, c2]);
    PointJacobians {
        stance_com: cols(Vector2::zeros(), ds * p.l_c),
        hip: cols(Vector2::zeros(), ds * p.l),
        swing_com: cols(dw * a, ds * p.l - dw * a),
        swing_foot: cols(dw * p.l, ds * p.l - dw * p.l),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinetic_from_points(q: &Vector2<f64>, dq: &Vector2<f64>, p: &ModelParams) -> f64 {
        let j = point_jacobians(q, p);
        let v = |m: &Matrix2<f64>| (m * dq).norm_squared();
        0.5 * (p.m_leg * v(&j.stance_com) + p.m_hip * v(&j.hip) + p.m_leg * v(&j.swing_com))
    }

    #[test]
    fn inertia_matches_point_mass_kinetic_energy() {
        let p = ModelParams::two_link();
        for &(q1, q2, w1, w2) in &[(0.3, -0.2, 1.0, -0.5), (-0.6, 0.25, 0.2, 2.0), (1.2, 0.9, -1.0, 0.1)] {
            let q = Vector2::new(q1, q2);
            let dq = Vector2::new(w1, w2);
            let x = State { q, dq };
            assert!((kinetic_energy(&x, &p) - kinetic_from_points(&q, &dq, &p)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_velocity_gives_zero_coriolis() {
        let p = ModelParams::two_link();
        let c = coriolis(&Vector2::new(0.4, -0.1), &Vector2::zeros(), &p);
        assert_eq!(c, Matrix2::zeros());
    }

    #[test]
    fn gravity_vanishes_without_gravity() {
        let p = ModelParams {
            gravity: 0.0,
            ..ModelParams::two_link()
        };
        assert_eq!(gravity_vector(&Vector2::new(0.3, 0.7), &p), Vector2::zeros());
    }

    #[test]
    fn energy_at_rest_is_potential() {
        let p = ModelParams::two_link();
        let x = State::new(0.2, 0.1, 0.0, 0.0);
        assert_eq!(total_energy(&x, &p), potential_energy(&x.q, &p));
    }

    #[test]
    fn selectors_are_orthonormal() {
        let (b, bc) = actuation_matrix();
        assert_eq!(b.dot(&b), 1.0);
        assert_eq!(bc.dot(&bc), 1.0);
        assert_eq!(b.dot(&bc), 0.0);
        // q = [B_c, B] (q^u, q^a)
        let perm = Matrix2::from_columns(&[bc, b]);
        let q = Vector2::new(0.4, -0.3);
        assert_eq!(perm * Vector2::new(q[Q_UNACTUATED], q[Q_ACTUATED]), q);
        assert_eq!(perm.transpose() * perm, Matrix2::identity());
        // B u only enters the q1 equation
        assert_eq!(b * 2.5, Vector2::new(2.5, 0.0));
    }

    #[test]
    fn validation_rejects_bad_params() {
        let good = ModelParams::two_link();
        assert!(good.validate().is_ok());
        assert!(ModelParams { l_c: 0.6, ..good }.validate().is_err());
        assert!(ModelParams { m_leg: 0.0, ..good }.validate().is_err());
        assert!(ModelParams { l: f64::NAN, ..good }.validate().is_err());
        assert!(ModelParams { gravity: -1.0, ..good }.validate().is_err());
    }
}
