//! Dormand–Prince 5(4) embedded Runge–Kutta integrator.
//!
//! States inside an accepted step are obtained by re-taking a single step of
//! the required length from the step's start point. A single RK step of
//! length `θh ≤ h` is at least as accurate as the accepted step, which keeps
//! event localization and trace sampling at integrator accuracy without a
//! separate interpolant.

use crate::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// 5th minus 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Right-hand side `ẏ = f(t, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> Result<[f64; N]>;
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    fn rhs(&self, t: f64, y: &[f64; N]) -> Result<[f64; N]> {
        self(t, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-10, abs: 1e-12 }
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// One Dormand–Prince step; returns the 5th-order solution and the error vector.
pub fn dopri_step<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> Result<([f64; N], [f64; N])> {
    let k1 = sys.rhs(t, y)?;
    let k2 = sys.rhs(t + C2 * h, &axpy(y, h, &[(A21, &k1)]))?;
    let k3 = sys.rhs(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]))?;
    let k4 = sys.rhs(t + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = sys.rhs(
        t + C5 * h,
        &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = sys.rhs(
        t + h,
        &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y5 = axpy(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = sys.rhs(t + h, &y5)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok((y5, err))
}

/// An accepted step `[t0, t1]`.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub y0: [f64; N],
    pub t1: f64,
    pub y1: [f64; N],
}

impl<const N: usize> Step<N> {
    /// State at `t ∈ [t0, t1]`.
    pub fn state_at<S: OdeSystem<N> + ?Sized>(&self, sys: &S, t: f64) -> Result<[f64; N]> {
        if t <= self.t0 {
            return Ok(self.y0);
        }
        if t >= self.t1 {
            return Ok(self.y1);
        }
        Ok(dopri_step(sys, self.t0, &self.y0, t - self.t0)?.0)
    }
}

/// Adaptive driver with an elementary I-controller.
#[derive(Debug, Clone)]
pub struct Integrator<const N: usize> {
    pub tol: Tolerances,
    pub t: f64,
    pub y: [f64; N],
    h: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub accepted: u64,
    pub rejected: u64,
}

impl<const N: usize> Integrator<N> {
    pub fn new(t0: f64, y0: [f64; N], tol: Tolerances) -> Self {
        Self {
            tol,
            t: t0,
            y: y0,
            h: 1e-4,
            h_min: 1e-14,
            h_max: 1e-2,
            accepted: 0,
            rejected: 0,
        }
    }

    fn error_norm(&self, y0: &[f64; N], y1: &[f64; N], err: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = self.tol.abs + self.tol.rel * y0[i].abs().max(y1[i].abs());
            let r = err[i] / sc;
            acc += r * r;
        }
        (acc / N as f64).sqrt()
    }

    /// Advance by one accepted step, never past `t_end`.
    pub fn advance<S: OdeSystem<N> + ?Sized>(&mut self, sys: &S, t_end: f64) -> Result<Step<N>> {
        loop {
            let remaining = t_end - self.t;
            let h = self.h.min(self.h_max).min(remaining);
            if h < self.h_min {
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }
            let (y1, err) = dopri_step(sys, self.t, &self.y, h)?;
            let en = self.error_norm(&self.y, &y1, &err);
            if !en.is_finite() {
                self.rejected += 1;
                self.h = 0.2 * h;
                continue;
            }
            let factor = if en == 0.0 {
                5.0
            } else {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            };
            if en <= 1.0 {
                let step = Step {
                    t0: self.t,
                    y0: self.y,
                    t1: if h == remaining { t_end } else { self.t + h },
                    y1,
                };
                self.t = step.t1;
                self.y = y1;
                self.accepted += 1;
                // do not let a truncated final step shrink the controller's step
                self.h = if h == remaining {
                    self.h.max(h * factor)
                } else {
                    h * factor
                };
                if !y1.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite { t: self.t });
                }
                return Ok(step);
            }
            self.rejected += 1;
            self.h = h * factor.min(1.0);
        }
    }
}

/// Locate a zero of `g(y(t))` inside `step`, assuming `g(y0) > 0 >= g(y1)`.
///
/// Bisection on time until either `|g| <= g_tol` with the bracket narrower
/// than `t_tol`, or the bracket collapses. Returns `(t, y)` on the non-positive side.
pub fn locate_crossing<const N: usize, S, G>(
    sys: &S,
    step: &Step<N>,
    g: G,
    g_tol: f64,
    t_tol: f64,
) -> Result<(f64, [f64; N])>
where
    S: OdeSystem<N> + ?Sized,
    G: Fn(&[f64; N]) -> f64,
{
    let (mut lo, mut hi) = (step.t0, step.t1);
    let mut y_hi = step.y1;
    let mut g_hi = g(&y_hi);
    for _ in 0..200 {
        if hi - lo <= t_tol && g_hi.abs() <= g_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y_mid = step.state_at(sys, mid)?;
        let g_mid = g(&y_mid);
        if g_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            y_hi = y_mid;
            g_hi = g_mid;
        }
    }
    Ok((hi, y_hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let sys = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let mut it = Integrator::new(0.0, [1.0, 0.0], Tolerances::default());
        let t_end = 2.0 * std::f64::consts::PI;
        while it.t < t_end {
            it.advance(&sys, t_end).unwrap();
        }
        assert!((it.y[0] - 1.0).abs() < 1e-9);
        assert!(it.y[1].abs() < 1e-9);
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let sys = |_t: f64, y: &[f64; 1]| Ok([-3.0 * y[0]]);
        let mut it = Integrator::new(0.0, [2.0], Tolerances { rel: 1e-11, abs: 1e-14 });
        while it.t < 1.0 {
            it.advance(&sys, 1.0).unwrap();
        }
        assert!((it.y[0] - 2.0 * (-3.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn crossing_of_falling_body() {
        // y = 1 - t²/2 hits zero at √2
        let sys = |_t: f64, y: &[f64; 2]| Ok([y[1], -1.0]);
        let mut it = Integrator::new(0.0, [1.0, 0.0], Tolerances::default());
        loop {
            let s = it.advance(&sys, 10.0).unwrap();
            if s.y1[0] <= 0.0 {
                let (t, y) = locate_crossing(&sys, &s, |y| y[0], 1e-13, 1e-13).unwrap();
                assert!((t - 2f64.sqrt()).abs() < 1e-11);
                assert!(y[0] <= 0.0 && y[0].abs() < 1e-12);
                break;
            }
        }
    }

    #[test]
    fn tiny_horizon_reports_underflow() {
        let sys = |_t: f64, y: &[f64; 1]| Ok([y[0]]);
        let mut it = Integrator::new(0.0, [1.0], Tolerances::default());
        it.h_min = 1e-3;
        assert!(matches!(it.advance(&sys, 1e-6), Err(Error::StepSizeUnderflow { .. })));
    }
}
