//! Closed-form helpers for 2×2 symmetric matrices.

use nalgebra::Matrix2;

/// Eigenvalues `(λ_min, λ_max)` of a symmetric 2×2 matrix.
///
/// Only the lower triangle is read.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let c = m[(1, 1)];
    let b = m[(1, 0)];
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let r = half_diff.hypot(b);
    (mean - r, mean + r)
}

/// Spectral norm of a general 2×2 matrix.
pub fn norm2(m: &Matrix2<f64>) -> f64 {
    let (_, max) = sym2_eigenvalues(&(m.transpose() * m));
    max.max(0.0).sqrt()
}

/// Frobenius norm of the symmetric part, `‖M + Mᵀ‖`.
pub fn skew_residual(m: &Matrix2<f64>) -> f64 {
    (m + m.transpose()).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_eigenvalues() {
        let (lo, hi) = sym2_eigenvalues(&Matrix2::new(2.0, 1.0, 1.0, 2.0));
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
        let (lo, hi) = sym2_eigenvalues(&Matrix2::new(2.0, 1.0, 1.0, 4.0));
        assert!((lo - (3.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((hi - (3.0 + 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_iterative_solver() {
        let m = Matrix2::new(0.7, -0.31, -0.31, 0.05);
        let (lo, hi) = sym2_eigenvalues(&m);
        let e = m.symmetric_eigenvalues();
        let (elo, ehi) = (e.min(), e.max());
        assert!((lo - elo).abs() < 1e-14 && (hi - ehi).abs() < 1e-14);
        assert!((norm2(&m) - ehi.abs().max(elo.abs())).abs() < 1e-14);
    }
}
