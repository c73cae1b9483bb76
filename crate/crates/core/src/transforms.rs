//! Underactuated coordinate machinery.
//!
//! Most quantities here are expressed in the *split* ordering
//! `(q^u, q^a) = (q2, q1)`, in which `B_c = (1, 0)ᵀ` and `B = (0, 1)ᵀ`, and
//! the error coordinates are `(q^u, e)`. The joint-space model uses `(q1, q2)`;
//! [`to_split`] converts between the two.

use nalgebra::{Matrix2, Vector2};

use crate::linalg::{norm2, sym2_eigenvalues};
use crate::model::{self, ModelParams, State};
use crate::outputs::{output_error, GaitParams};
use crate::{Error, Result};

/// Unactuated selector in split ordering.
pub const BC_SPLIT: Vector2<f64> = Vector2::new(1.0, 0.0);
/// Actuated selector in split ordering.
pub const B_SPLIT: Vector2<f64> = Vector2::new(0.0, 1.0);

/// `[B_c, B]` for the joint ordering; maps split coordinates to joint coordinates.
pub fn split_permutation() -> Matrix2<f64> {
    let (b, bc) = model::actuation_matrix();
    Matrix2::from_columns(&[bc, b])
}

/// `Pᵀ M P` with `P = [B_c, B]`.
pub fn to_split(m: &Matrix2<f64>) -> Matrix2<f64> {
    let p = split_permutation();
    p.transpose() * m * p
}

pub fn vec_to_split(v: &Vector2<f64>) -> Vector2<f64> {
    split_permutation().transpose() * v
}

/// `A(q) = I - D B_c (B_cᵀ D B_c)⁻¹ B_cᵀ` and the actuated Schur complement `BᵀADB`.
#[derive(Debug, Clone, Copy)]
pub struct SchurOperator {
    /// `A` in joint ordering.
    pub a: Matrix2<f64>,
    pub schur: f64,
}

fn schur_parts(d: &Matrix2<f64>, b: &Vector2<f64>, bc: &Vector2<f64>) -> (Matrix2<f64>, f64) {
    let d11 = bc.dot(&(d * bc));
    let a = Matrix2::identity() - (d * bc) * bc.transpose() / d11;
    let schur = b.dot(&(a * d * b));
    (a, schur)
}

pub fn schur_operator(q: &Vector2<f64>, p: &ModelParams) -> SchurOperator {
    let d = model::inertia(q, p);
    let (b, bc) = model::actuation_matrix();
    let (a, schur) = schur_parts(&d, &b, &bc);
    SchurOperator { a, schur }
}

/// Partial derivatives of the output `e = q1 - q^a_d(τ(q2))`.
#[derive(Debug, Clone, Copy)]
pub struct ErrorPartials {
    /// `∂e/∂q^a`.
    pub j: f64,
    /// `∂e/∂q^u`.
    pub de_dqu: f64,
    /// `J_e = [[1, 0], [∂e/∂q^u, J]]` in split ordering.
    pub je: Matrix2<f64>,
}

pub fn error_partials(q: &Vector2<f64>, gait: &GaitParams) -> ErrorPartials {
    let (_, dqd, _) = gait.desired_in_q2(q[1]);
    let de_dqu = -dqd;
    let j = 1.0;
    ErrorPartials {
        j,
        de_dqu,
        je: Matrix2::new(1.0, 0.0, de_dqu, j),
    }
}

/// Dynamics matrices in the `(q^u, e)` coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TransformedMatrices {
    pub d_e: Matrix2<f64>,
    pub c_e: Matrix2<f64>,
    pub g_e: Vector2<f64>,
    /// Analytic `Ḋ_e`.
    pub d_e_rate: Matrix2<f64>,
}

struct ErrorFrame {
    je_inv: Matrix2<f64>,
    je_inv_rate: Matrix2<f64>,
}

fn error_frame(x: &State, gait: &GaitParams) -> Result<ErrorFrame> {
    let ep = error_partials(&x.q, gait);
    let je_inv = ep.je.try_inverse().ok_or(Error::Singular("output Jacobian J_e"))?;
    let (_, _, ddqd) = gait.desired_in_q2(x.q[1]);
    // d/dt(∂e/∂q^u) = -q^a_d''(q2) q̇2
    let je_rate = Matrix2::new(0.0, 0.0, -ddqd * x.dq[1], 0.0);
    let je_inv_rate = -je_inv * je_rate * je_inv;
    Ok(ErrorFrame { je_inv, je_inv_rate })
}

pub fn transformed_matrices(x: &State, gait: &GaitParams, p: &ModelParams) -> Result<TransformedMatrices> {
    let f = error_frame(x, gait)?;
    let d = to_split(&model::inertia(&x.q, p));
    let c = to_split(&model::coriolis(&x.q, &x.dq, p));
    let d_rate = to_split(&model::inertia_rate(&x.q, &x.dq, p));
    let g = vec_to_split(&model::gravity_vector(&x.q, p));
    let jit = f.je_inv.transpose();
    Ok(TransformedMatrices {
        d_e: jit * d * f.je_inv,
        c_e: jit * c * f.je_inv + jit * d * f.je_inv_rate,
        g_e: jit * g,
        d_e_rate: f.je_inv_rate.transpose() * d * f.je_inv + jit * d_rate * f.je_inv + jit * d * f.je_inv_rate,
    })
}

/// `A_e`, `B_e` and `B_e'` for the single-actuator walker.
#[derive(Debug, Clone, Copy)]
pub struct BeFunctions {
    pub a_e: Matrix2<f64>,
    pub b_e: f64,
    pub b_e_prime: f64,
    /// `Bᵀ A_e D_e B`.
    pub schur_e: f64,
}

pub fn be_functions(q: &Vector2<f64>, gait: &GaitParams, p: &ModelParams) -> Result<BeFunctions> {
    let ep = error_partials(q, gait);
    let je_inv = ep.je.try_inverse().ok_or(Error::Singular("output Jacobian J_e"))?;
    let d = to_split(&model::inertia(q, p));
    let d_e = je_inv.transpose() * d * je_inv;
    let (a_e, schur_e) = schur_parts(&d_e, &B_SPLIT, &BC_SPLIT);
    let de_u = BC_SPLIT.dot(&(d_e * BC_SPLIT));
    let b_e = 1.0 + B_SPLIT.dot(&(d_e * BC_SPLIT)) / de_u * ep.de_dqu;
    let d11 = BC_SPLIT.dot(&(d * BC_SPLIT));
    let d12 = BC_SPLIT.dot(&(d * B_SPLIT));
    let b_e_prime = 1.0 - d12 / d11 / ep.j * ep.de_dqu;
    Ok(BeFunctions {
        a_e,
        b_e,
        b_e_prime,
        schur_e,
    })
}

/// `Λ_{B_e}` for scalar `B_e`.
pub fn lambda_be_matrix(b_e: f64, e_abs: f64) -> Matrix2<f64> {
    let w = 1.0 + e_abs;
    let off = b_e + w * (b_e - 1.0);
    Matrix2::new(2.0 * b_e, off, off, 2.0 * w * b_e)
}

/// `Λ_{B_e}` at `q` together with its eigenvalues `(λ_min, λ_max)`.
pub fn lambda_be(
    q: &Vector2<f64>,
    e_abs: f64,
    gait: &GaitParams,
    p: &ModelParams,
) -> Result<(Matrix2<f64>, (f64, f64))> {
    if !(e_abs >= 0.0) {
        return Err(Error::invalid("|e| must be non-negative"));
    }
    let be = be_functions(q, gait, p)?;
    let m = lambda_be_matrix(be.b_e, e_abs);
    Ok((m, sym2_eigenvalues(&m)))
}

/// Per-sample quantities behind the output-selection assumption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformReport {
    pub lambda_be_min: f64,
    pub be_prime: f64,
    pub be: f64,
    pub cond_je: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AssumptionReport {
    pub samples: Vec<TransformReport>,
    /// Indices of samples where `Λ_{B_e}` is not positive definite or `B_e'` is not invertible.
    pub violations: Vec<usize>,
}

impl AssumptionReport {
    pub fn min_lambda(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.lambda_be_min)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_abs_be_prime(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.be_prime.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// `|B_e'|` below this counts as non-invertible.
pub const BE_PRIME_MIN: f64 = 1e-6;

pub fn assumption_report(trajectory: &[State], gait: &GaitParams, p: &ModelParams) -> Result<AssumptionReport> {
    if trajectory.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut report = AssumptionReport::default();
    for (i, x) in trajectory.iter().enumerate() {
        let (e, _) = output_error(x, gait);
        let be = be_functions(&x.q, gait, p)?;
        let (lo, _) = sym2_eigenvalues(&lambda_be_matrix(be.b_e, e.abs()));
        let je = error_partials(&x.q, gait).je;
        let cond = norm2(&je) * je.try_inverse().map(|m| norm2(&m)).unwrap_or(f64::INFINITY);
        let s = TransformReport {
            lambda_be_min: lo,
            be_prime: be.b_e_prime,
            be: be.b_e,
            cond_je: cond,
        };
        if !(lo > 0.0) || !(be.b_e_prime.abs() > BE_PRIME_MIN) {
            report.violations.push(i);
        }
        report.samples.push(s);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_lambda_be() {
        let (lo, _) = sym2_eigenvalues(&lambda_be_matrix(1.0, 0.0));
        assert!((lo - 1.0).abs() < 1e-15);
        assert_eq!(lambda_be_matrix(1.0, 1.0), Matrix2::new(2.0, 1.0, 1.0, 4.0));
        let (lo, _) = sym2_eigenvalues(&lambda_be_matrix(1.0, 1.0));
        assert!((lo - (3.0 - 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn flat_output_leaves_be_unity() {
        let gait = GaitParams {
            zeta: [0.0; 6],
            ..GaitParams::nominal()
        };
        let be = be_functions(&Vector2::new(0.3, -0.1), &gait, &ModelParams::two_link()).unwrap();
        assert_eq!(be.b_e, 1.0);
        assert_eq!(be.b_e_prime, 1.0);
    }

    #[test]
    fn identity_jacobian_keeps_matrices() {
        let p = ModelParams::two_link();
        let gait = GaitParams {
            zeta: [0.0; 6],
            ..GaitParams::nominal()
        };
        let x = State::new(0.4, -0.2, 1.3, -0.7);
        let t = transformed_matrices(&x, &gait, &p).unwrap();
        assert_eq!(t.d_e, to_split(&model::inertia(&x.q, &p)));
        assert_eq!(t.c_e, to_split(&model::coriolis(&x.q, &x.dq, &p)));
        assert_eq!(t.g_e, vec_to_split(&model::gravity_vector(&x.q, &p)));
    }

    #[test]
    fn error_jacobian_structure() {
        let g = GaitParams::nominal();
        let ep = error_partials(&Vector2::new(0.1, 0.05), &g);
        assert_eq!(ep.j, 1.0);
        assert_eq!(ep.je.determinant(), 1.0);
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        assert!(matches!(
            assumption_report(&[], &GaitParams::nominal(), &ModelParams::two_link()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn schur_annihilates_unactuated_direction() {
        let p = ModelParams::two_link();
        let q = Vector2::new(-0.4, 0.2);
        let s = schur_operator(&q, &p);
        let d = model::inertia(&q, &p);
        let (_, bc) = model::actuation_matrix();
        assert!(bc.dot(&(s.a * d * bc)).abs() < 1e-16);
        assert!((s.a * d * bc).norm() < 1e-16);
    }
}
