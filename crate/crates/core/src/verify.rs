//! Sampled property checks of the model, the coordinate transforms, the hybrid
//! simulator and the zero dynamics.

use std::fmt;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hybrid::{guard_height, guard_predicate, guard_rate, OutcomeKind, Sample, SimOptions, StepOutcome, Walker};
use crate::hzd::{self, OrbitRecord};
use crate::integrate::dopri_step;
use crate::linalg::{norm2, skew_residual, sym2_eigenvalues};
use crate::model::{self, ModelParams, State};
use crate::outputs::{output_error, GaitParams};
use crate::transforms::{self, be_functions, lambda_be_matrix, transformed_matrices, AssumptionReport};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured value.
    pub value: f64,
    /// What the value was compared against.
    pub limit: f64,
    pub detail: String,
}

impl Check {
    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value < limit,
            value,
            limit,
            detail: format!("< {limit:e}"),
        }
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value > limit,
            value,
            limit,
            detail: format!("> {limit:e}"),
        }
    }

    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
            detail: format!("<= {limit:e}"),
        }
    }

    pub fn failed(name: &str, why: String) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            limit: f64::NAN,
            detail: why,
        }
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = format!("{} ({})", self.detail, d.into());
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<52} {:>24.17e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.detail
        )
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Uniform samples of `(q, q̇)` over `q ∈ [-π/2, π/2]²`, `q̇ ∈ [-5, 5]²`.
pub fn random_states(n: usize, seed: u64) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = std::f64::consts::FRAC_PI_2;
    (0..n)
        .map(|_| {
            State::new(
                rng.gen_range(-h..=h),
                rng.gen_range(-h..=h),
                rng.gen_range(-5.0..=5.0),
                rng.gen_range(-5.0..=5.0),
            )
        })
        .collect()
}

/// Samples near the walking path: `q2` within the phase interval widened by
/// `0.1`, `q1` within `0.3` of the desired hip angle, `q̇ ∈ [-3, 3]²`.
pub fn tube_states(n: usize, seed: u64, gait: &GaitParams) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (gait.q0.min(gait.qf) - 0.1, gait.q0.max(gait.qf) + 0.1);
    (0..n)
        .map(|_| {
            let q2 = rng.gen_range(lo..=hi);
            let q1 = gait.desired_in_q2(q2).0 + rng.gen_range(-0.3..=0.3);
            State::new(q1, q2, rng.gen_range(-3.0..=3.0), rng.gen_range(-3.0..=3.0))
        })
        .collect()
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

fn min_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

/// Symmetry, definiteness, skew symmetry, Schur identities and sampled bounds.
pub fn mechanics_suite(p: &ModelParams, gait: &GaitParams, n: usize, seed: u64) -> Result<Vec<Check>> {
    let xs = random_states(n, seed);
    let tube = tube_states(n, seed.wrapping_add(1), gait);
    let mut out = Vec::new();

    let asym = max_of(xs.iter().map(|x| {
        let d = model::inertia(&x.q, p);
        (d - d.transpose()).abs().max()
    }));
    out.push(Check::at_most("D symmetric", asym, 0.0));
    let d_min = min_of(xs.iter().map(|x| sym2_eigenvalues(&model::inertia(&x.q, p)).0));
    out.push(Check::above("D positive definite (min eigenvalue)", d_min, 0.0));
    let skew = max_of(xs.iter().map(|x| {
        let m = model::inertia_rate(&x.q, &x.dq, p) - 2.0 * model::coriolis(&x.q, &x.dq, p);
        skew_residual(&m)
    }));
    out.push(Check::below("Ddot - 2C skew residual", skew, 1e-10));

    let mut schur_err = 0.0f64;
    let mut block_err = 0.0f64;
    let mut schur_min = f64::INFINITY;
    for x in &xs {
        let d = model::inertia(&x.q, p);
        let s = transforms::schur_operator(&x.q, p).schur;
        // actuated block minus coupling through the unactuated block
        let direct = d[(0, 0)] - d[(0, 1)] * d[(1, 0)] / d[(1, 1)];
        schur_err = schur_err.max((s - direct).abs());
        let d_inv = d.try_inverse().unwrap_or(Matrix2::from_element(f64::NAN));
        block_err = block_err.max((d_inv[(0, 0)] - 1.0 / s).abs());
        schur_min = schur_min.min(s);
    }
    out.push(Check::below("Schur complement identity", schur_err, 1e-12));
    out.push(Check::below("block inverse of D", block_err, 1e-10));
    out.push(Check::above("B'ADB positive (min)", schur_min, 0.0));

    let grad_err = max_of(xs.iter().map(|x| {
        let g = model::gravity_vector(&x.q, p);
        let d = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..2 {
            let mut a = x.q;
            let mut b = x.q;
            a[i] += d;
            b[i] -= d;
            let fd = (model::potential_energy(&a, p) - model::potential_energy(&b, p)) / (2.0 * d);
            worst = worst.max((fd - g[i]).abs());
        }
        worst
    }));
    out.push(Check::below("G matches gradient of U", grad_err, 1e-6));

    // sampled constants of the norm bounds
    let c_u = max_of(xs.iter().map(|x| {
        let c = norm2(&model::coriolis(&x.q, &x.dq, p)) / x.dq.norm().max(1e-300);
        c.max(model::gravity_vector(&x.q, p).norm())
            .max(norm2(&model::inertia(&x.q, p)))
    }));
    out.push(
        Check::below("sampled upper bound c_u", c_u, f64::INFINITY)
            .with_detail(format!("lower bound c_l = {d_min:.6e}")),
    );

    let mut de_min = f64::INFINITY;
    let mut de_skew = 0.0f64;
    let mut se_lo = f64::INFINITY;
    let mut se_hi = 0.0f64;
    let mut ce_ratio = 0.0f64;
    for x in &tube {
        let t = transformed_matrices(x, gait, p)?;
        de_min = de_min.min(sym2_eigenvalues(&t.d_e).0);
        de_skew = de_skew.max(skew_residual(&(t.d_e_rate - 2.0 * t.c_e)));
        let be = be_functions(&x.q, gait, p)?;
        se_lo = se_lo.min(be.schur_e);
        se_hi = se_hi.max(be.schur_e);
        // ‖BᵀA_e C_e‖ against |q̇^u| + |ė|
        let row = transforms::B_SPLIT.transpose() * be.a_e * t.c_e;
        let (_, edot) = output_error(x, gait);
        let speed = x.dq[1].abs() + edot.abs();
        if speed > 1e-9 {
            ce_ratio = ce_ratio.max(row.norm() / speed);
        }
    }
    out.push(Check::above("D_e positive definite (min eigenvalue)", de_min, 0.0));
    out.push(Check::below("Ddot_e - 2C_e skew residual", de_skew, 1e-8));
    out.push(Check::above("B'A_eD_eB bounded below", se_lo, 0.0).with_detail(format!(
        "range [{se_lo:.6e}, {se_hi:.6e}], inverse <= {:.6e}",
        1.0 / se_lo
    )));
    out.push(Check::below("|B'A_eC_e| / (|dq_u| + |edot|)", ce_ratio, f64::INFINITY));
    Ok(out)
}

/// `min eig Λ_{B_e}` along the desired path (`e = 0`), which needs no simulation.
pub fn path_lambda_min(gait: &GaitParams, p: &ModelParams, n: usize) -> Result<(f64, f64)> {
    let mut lam = f64::INFINITY;
    let mut bp = f64::INFINITY;
    for i in 0..=n {
        let q2 = gait.q0 + (gait.qf - gait.q0) * i as f64 / n as f64;
        let q = Vector2::new(gait.desired_in_q2(q2).0, q2);
        let be = be_functions(&q, gait, p)?;
        lam = lam.min(sym2_eigenvalues(&lambda_be_matrix(be.b_e, 0.0)).0);
        bp = bp.min(be.b_e_prime.abs());
    }
    Ok((lam, bp))
}

pub fn assumption_checks(report: &AssumptionReport) -> Vec<Check> {
    vec![
        Check::above("Lambda_Be min eigenvalue along steps", report.min_lambda(), 0.0)
            .with_detail(format!("{} violations", report.violations.len())),
        Check::above(
            "|B_e'| min along steps",
            report.min_abs_be_prime(),
            transforms::BE_PRIME_MIN,
        ),
    ]
}

/// Largest residual of `B_e' ż1 = D11⁻¹(z2 - D12 J⁻¹ ė)` over the samples.
pub fn be_prime_identity(samples: &[Sample], gait: &GaitParams, p: &ModelParams) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in samples {
        let be = be_functions(&s.x.q, gait, p)?;
        let ts = hzd::to_transformed(&s.x, gait, p);
        let d = model::inertia(&s.x.q, p);
        // split-ordering blocks: 11 is the stance angle, 12 couples to the hip
        let (d11, d12) = (d[(1, 1)], d[(1, 0)]);
        let lhs = be.b_e_prime * s.x.dq[1];
        let rhs = (ts.z2 - d12 * ts.edot) / d11;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Stencil half-width (s) for differentiating the energy along the flow.
pub const ENERGY_STENCIL: f64 = 1e-6;

/// `dE/dt` at `x` by a five-point stencil along the closed-loop flow through `x`.
pub fn energy_rate(walker: &Walker, x: &State, delta: f64) -> Result<f64> {
    let sys = |_t: f64, y: &[f64; 4]| walker.vector_field(&State::from_array(y));
    let y = x.to_array();
    let e_at = |h: f64| -> Result<f64> {
        let (yh, _) = dopri_step(&sys, 0.0, &y, h)?;
        Ok(model::total_energy(&State::from_array(&yh), &walker.model))
    };
    let (em2, em1, ep1, ep2) = (e_at(-2.0 * delta)?, e_at(-delta)?, e_at(delta)?, e_at(2.0 * delta)?);
    Ok((em2 - 8.0 * em1 + 8.0 * ep1 - ep2) / (12.0 * delta))
}

/// Largest `|dE/dt - q̇ᵀBu|` over the logged samples, relative to the peak
/// actuator power on the same samples.
///
/// The closed loop has a fast mode (rate `≈ k_d / BᵀADB`) far shorter than any
/// practical log spacing, so the energy is differentiated along the flow
/// through each logged sample rather than across neighbouring samples.
pub fn passivity_error(walker: &Walker, trace: &[Sample]) -> Result<Option<f64>> {
    let mut worst = 0.0f64;
    let mut peak = 0.0f64;
    for s in trace {
        let power = s.x.dq[0] * s.u;
        peak = peak.max(power.abs());
        worst = worst.max((energy_rate(walker, &s.x, ENERGY_STENCIL)? - power).abs());
    }
    Ok(if peak > 0.0 { Some(worst / peak) } else { None })
}

/// Worst [`passivity_error`] over the swings of a run.
pub fn passivity_check(walker: &Walker, steps: &[StepOutcome]) -> Check {
    let name = "dE/dt = dq1 u (relative)";
    let mut worst = 0.0f64;
    for s in steps {
        match passivity_error(walker, &s.trace) {
            Ok(Some(r)) => worst = worst.max(r),
            Ok(None) => {}
            Err(e) => return Check::failed(name, e.to_string()),
        }
    }
    Check::below(name, worst, 1e-5).with_detail(format!("{} swings", steps.len()))
}

/// Event localization, dissipation, continuity and no-re-trigger at every impact.
pub fn impact_checks(runs: &[&[StepOutcome]], p: &ModelParams, opts: &SimOptions) -> Vec<Check> {
    let mut n = 0usize;
    let mut dissipating = 0usize;
    let mut worst_gain = f64::NEG_INFINITY;
    let mut worst_h = 0.0f64;
    let mut localized = 0usize;
    let mut hip = 0.0f64;
    let mut retrigger = 0usize;
    for steps in runs {
        for s in steps.iter().filter(|s| s.kind == OutcomeKind::Impact) {
            let Some(post) = s.post_state else { continue };
            let pre = s.pre_state;
            n += 1;
            let ke_pre = model::kinetic_energy(&pre, p);
            let ke_post = model::kinetic_energy(&post, p);
            if ke_post <= ke_pre {
                dissipating += 1;
            }
            worst_gain = worst_gain.max(ke_post - ke_pre);
            let h = guard_height(&pre.q, p);
            worst_h = worst_h.max(h.abs());
            if h.abs() <= opts.guard_tol && guard_rate(&pre, p) < 0.0 && pre.q[0] > opts.anti_scuff_q1_min {
                localized += 1;
            }
            let a = model::points(&pre.q, p);
            let b = model::points(&post.q, p);
            hip = hip.max((b.hip + a.swing_foot - a.hip).norm());
            if guard_predicate(&post, p, opts) {
                retrigger += 1;
            }
        }
    }
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    vec![
        Check::at_most("impacts dissipate (fraction failing)", 1.0 - frac(dissipating), 0.0)
            .with_detail(format!("{n} impacts, max KE gain {worst_gain:.3e}")),
        Check::at_most("impacts on the guard (fraction failing)", 1.0 - frac(localized), 0.0)
            .with_detail(format!("max |h| {worst_h:.3e}")),
        Check::below("hip continuity through impact", hip, 1e-12),
        Check::at_most("post-impact states on the guard", retrigger as f64, 0.0),
    ]
}

/// Fixed-point residual, spectral radius and its robustness, geometric rate and invariance.
pub fn hzd_checks(orbit: &OrbitRecord, fd_step: f64, opts: &SimOptions) -> Vec<Check> {
    let mut out = vec![
        Check::below("fixed-point residual", orbit.residual, 1e-9),
        Check::below("spectral radius of Drho", orbit.spectral_radius(), 1.0),
        Check::below(
            "hybrid invariance residual |(e+, edot+)|",
            orbit.invariance_residual,
            1e-6,
        ),
    ];
    let (g, p) = (&orbit.gait, &orbit.model);
    match hzd::section_derivative(orbit.z_star, 0.5 * fd_step, g, p, opts) {
        Ok(half) => {
            let full = orbit.spectral_radius();
            let rel = (half.abs() - full).abs() / full.max(1e-300);
            out.push(Check::below("Drho stable under halving the step (relative)", rel, 1e-3));
        }
        Err(e) => out.push(Check::failed(
            "Drho stable under halving the step (relative)",
            e.to_string(),
        )),
    }
    let z0 = [orbit.z_star[0], orbit.z_star[1] * 1.05];
    match hzd::rho_iterates(z0, 10, g, p, opts) {
        Ok(it) => {
            let d: Vec<f64> = it.iter().map(|z| (z[1] - orbit.z_star[1]).abs()).collect();
            let rate = hzd::geometric_rate(&d, 1e-11).unwrap_or(f64::NAN);
            out.push(Check::below("geometric rate of rho iterates", rate, 1.0));
        }
        Err(e) => out.push(Check::failed("geometric rate of rho iterates", e.to_string())),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_comparisons() {
        assert!(Check::below("a", 1.0, 2.0).passed);
        assert!(!Check::below("a", 2.0, 2.0).passed);
        assert!(Check::at_most("a", 2.0, 2.0).passed);
        assert!(!Check::above("a", f64::NAN, 0.0).passed);
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(random_states(5, 3), random_states(5, 3));
        assert_ne!(random_states(5, 3), random_states(5, 4));
    }
}
