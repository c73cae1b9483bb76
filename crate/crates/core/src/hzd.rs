//! Hybrid zero dynamics: transformed coordinates, restricted and full Poincaré
//! maps, periodic-orbit search and Lyapunov diagnostics.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::hybrid::{self, guard_height, impact_map, OutcomeKind, SimOptions, StepOutcome, Walker, EVENT_TIME_TOL};
use crate::integrate::{locate_crossing, Integrator};
use crate::model::{self, ModelParams, State};
use crate::outputs::{output_error, Gains, GaitParams};
use crate::transforms::be_functions;
use crate::{Error, Result};

/// `(e, ė, z1, z2)` with `z1 = q2` and `z2 = B_cᵀ D(q) q̇`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedState {
    pub e: f64,
    pub edot: f64,
    pub z1: f64,
    pub z2: f64,
}

impl TransformedState {
    pub fn on_surface(z1: f64, z2: f64) -> Self {
        Self {
            e: 0.0,
            edot: 0.0,
            z1,
            z2,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.e, self.edot, self.z1, self.z2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            e: a[0],
            edot: a[1],
            z1: a[2],
            z2: a[3],
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let (a, b) = (self.to_array(), other.to_array());
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

pub fn to_transformed(x: &State, gait: &GaitParams, p: &ModelParams) -> TransformedState {
    let (e, edot) = output_error(x, gait);
    let (_, bc) = model::actuation_matrix();
    let z2 = bc.dot(&(model::inertia(&x.q, p) * x.dq));
    TransformedState {
        e,
        edot,
        z1: x.q[1],
        z2,
    }
}

pub fn from_transformed(ts: &TransformedState, gait: &GaitParams, p: &ModelParams) -> Result<State> {
    let (qd, dqd, _) = gait.desired_in_q2(ts.z1);
    let q = Vector2::new(ts.e + qd, ts.z1);
    let d = model::inertia(&q, p);
    // rows: ė = q̇1 - q^a_d' q̇2 and z2 = D21 q̇1 + D22 q̇2
    let m = Matrix2::new(1.0, -dqd, d[(1, 0)], d[(1, 1)]);
    if !(m.determinant().abs() > 1e-12) {
        return Err(Error::Singular("velocity reconstruction"));
    }
    let dq = m
        .lu()
        .solve(&Vector2::new(ts.edot, ts.z2))
        .ok_or(Error::Singular("velocity reconstruction"))?;
    Ok(State { q, dq })
}

/// Full state on the zero surface for zero coordinates `(z1, z2)`.
pub fn lift(z1: f64, z2: f64, gait: &GaitParams, p: &ModelParams) -> Result<State> {
    from_transformed(&TransformedState::on_surface(z1, z2), gait, p)
}

/// Right-hand side of the zero dynamics: `(ż1, ż2)` with `ż2 = B_cᵀ(Ḋq̇ - Cq̇ - G)`.
pub fn zero_dynamics(z: &[f64; 2], gait: &GaitParams, p: &ModelParams) -> Result<[f64; 2]> {
    let x = lift(z[0], z[1], gait, p)?;
    let (_, bc) = model::actuation_matrix();
    let rhs = model::inertia_rate(&x.q, &x.dq, p) * x.dq
        - model::coriolis(&x.q, &x.dq, p) * x.dq
        - model::gravity_vector(&x.q, p);
    Ok([x.dq[1], bc.dot(&rhs)])
}

/// Swing-foot height on the zero surface.
fn surface_guard(z1: f64, gait: &GaitParams, p: &ModelParams) -> f64 {
    guard_height(&Vector2::new(gait.desired_in_q2(z1).0, z1), p)
}

#[derive(Debug, Clone)]
pub struct HzdFlow {
    /// `(t, z1, z2)` samples, starting at `t = 0` and ending at the foot strike.
    pub samples: Vec<[f64; 3]>,
    pub t_impact: f64,
    pub z_pre: [f64; 2],
}

/// Integrate the zero dynamics from `z0` until the swing foot strikes.
pub fn hzd_flow(z0: [f64; 2], gait: &GaitParams, p: &ModelParams, opts: &SimOptions) -> Result<HzdFlow> {
    let sys = |_t: f64, z: &[f64; 2]| zero_dynamics(z, gait, p);
    let h_of = |z: &[f64; 2]| surface_guard(z[0], gait, p);
    let mut it = Integrator::new(0.0, z0, opts.tolerances());
    let dt = opts.sample_dt;
    let mut samples = vec![[0.0, z0[0], z0[1]]];
    let mut k = 1u64;
    loop {
        let step = it.advance(&sys, opts.t_max)?;
        let strike = h_of(&step.y0) > 0.0 && h_of(&step.y1) <= 0.0 && {
            let q1 = gait.desired_in_q2(step.y1[0]).0;
            q1 > opts.anti_scuff_q1_min
        };
        let t_stop = if strike {
            let (te, ze) = locate_crossing(&sys, &step, h_of, opts.guard_tol, EVENT_TIME_TOL)?;
            Some((te, ze))
        } else {
            None
        };
        let limit = t_stop.map_or(step.t1, |(t, _)| t);
        loop {
            let ts = k as f64 * dt;
            if ts >= limit && !(t_stop.is_none() && ts == limit) {
                break;
            }
            let zs = step.state_at(&sys, ts)?;
            samples.push([ts, zs[0], zs[1]]);
            k += 1;
        }
        if let Some((te, ze)) = t_stop {
            samples.push([te, ze[0], ze[1]]);
            return Ok(HzdFlow {
                samples,
                t_impact: te,
                z_pre: ze,
            });
        }
        let q2 = step.y1[0];
        if q2.abs() > std::f64::consts::FRAC_PI_2 || q2.cos() < opts.fall_hip_height_frac {
            return Err(Error::LeftTube(format!("stance angle {q2} at t = {}", step.t1)));
        }
        if step.y1[1] * z0[1] < 0.0 {
            return Err(Error::LeftTube(format!("zero dynamics reversed at t = {}", step.t1)));
        }
        if step.t1 >= opts.t_max {
            return Err(Error::Timeout { t_max: opts.t_max });
        }
    }
}

/// Impact map in transformed coordinates applied to the on-surface state `(0, 0, z)`.
pub fn surface_impact(z: [f64; 2], gait: &GaitParams, p: &ModelParams) -> Result<TransformedState> {
    let x = lift(z[0], z[1], gait, p)?;
    Ok(to_transformed(&impact_map(&x, p)?, gait, p))
}

/// Restricted Poincaré map: pre-impact `z` to the next pre-impact `z`, with the
/// outputs held at zero after the impact.
pub fn restricted_poincare(z_s: [f64; 2], gait: &GaitParams, p: &ModelParams, opts: &SimOptions) -> Result<HzdFlow> {
    let plus = surface_impact(z_s, gait, p)?;
    hzd_flow([plus.z1, plus.z2], gait, p, opts)
}

/// Stance angle at which the swing foot strikes on the zero surface.
pub fn section_z1(gait: &GaitParams, p: &ModelParams, opts: &SimOptions) -> Result<f64> {
    // h vanishes at the strike; search between the scuff window and a generous upper bound
    let f = |z1: f64| surface_guard(z1, gait, p);
    let (mut lo, mut hi) = (gait.q0.min(gait.qf), gait.q0.max(gait.qf));
    let span = hi - lo;
    hi += 0.5 * span;
    // move lo past the scuff root, where q1 <= anti-scuff
    let n = 400;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..=n {
        let z1 = lo + (hi - lo) * i as f64 / n as f64;
        let g = f(z1);
        if let Some((z0, g0)) = prev {
            if g0 > 0.0 && g <= 0.0 && gait.desired_in_q2(z1).0 > opts.anti_scuff_q1_min {
                bracket = Some((z0, z1));
                break;
            }
        }
        prev = Some((z1, g));
    }
    let (a, b) = bracket.ok_or(Error::NonConvergence {
        what: "strike angle on the zero surface",
        iterations: n,
        residual: f64::NAN,
    })?;
    lo = a;
    hi = b;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Output error right after a strike from the zero surface; independent of `z2`
/// in direction, so it is evaluated at unit `z2`.
pub fn invariance_residual(gait: &GaitParams, p: &ModelParams, opts: &SimOptions) -> Result<(f64, f64)> {
    let z1 = section_z1(gait, p, opts)?;
    let plus = surface_impact([z1, 1.0], gait, p)?;
    Ok((plus.e, plus.edot / plus.z2))
}

/// Choose `(q0, qf)` so that the impact maps the zero surface into itself:
/// `e⁺ = 0` and `ė⁺ = 0`. Newton's method with a finite-difference Jacobian.
pub fn calibrate_phase_endpoints(gait: &GaitParams, p: &ModelParams, opts: &SimOptions) -> Result<GaitParams> {
    let resid = |q0: f64, qf: f64| -> Result<Vector2<f64>> {
        let g = GaitParams { q0, qf, ..*gait };
        let (e, ed) = invariance_residual(&g, p, opts)?;
        Ok(Vector2::new(e, ed))
    };
    let mut v = Vector2::new(gait.q0, gait.qf);
    let mut r = resid(v[0], v[1])?;
    let max_iter = 50;
    for _ in 0..max_iter {
        if r.norm() < 1e-13 {
            return Ok(GaitParams {
                q0: v[0],
                qf: v[1],
                ..*gait
            });
        }
        let d = 1e-7;
        let mut j = Matrix2::zeros();
        for i in 0..2 {
            let mut a = v;
            let mut b = v;
            a[i] += d;
            b[i] -= d;
            let col = (resid(a[0], a[1])? - resid(b[0], b[1])?) / (2.0 * d);
            j.set_column(i, &col);
        }
        let step = j
            .lu()
            .solve(&(-r))
            .ok_or(Error::Singular("endpoint calibration Jacobian"))?;
        // backtrack to keep the residual decreasing
        let mut lambda = 1.0;
        loop {
            let cand = v + step * lambda;
            match resid(cand[0], cand[1]) {
                Ok(rc) if rc.norm() < r.norm() => {
                    v = cand;
                    r = rc;
                    break;
                }
                _ => {
                    lambda *= 0.5;
                    if lambda < 1e-6 {
                        return Err(Error::NonConvergence {
                            what: "phase endpoint calibration",
                            iterations: max_iter,
                            residual: r.norm(),
                        });
                    }
                }
            }
        }
    }
    if r.norm() < 1e-10 {
        return Ok(GaitParams {
            q0: v[0],
            qf: v[1],
            ..*gait
        });
    }
    Err(Error::NonConvergence {
        what: "phase endpoint calibration",
        iterations: max_iter,
        residual: r.norm(),
    })
}

/// Periodic orbit of the zero dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    /// Pre-impact fixed point `(z1*, z2*)` on the guard.
    pub z_star: [f64; 2],
    pub t_star: f64,
    /// `|ρ(z*) - z*|`.
    pub residual: f64,
    /// Magnitudes of the eigenvalues of `Dρ(z*)` on the section.
    pub rho_jacobian_eigs: Vec<f64>,
    /// `|(e⁺, ė⁺)|` after an impact from `(0, 0, z*)`.
    pub invariance_residual: f64,
    /// Spacing of `orbit_samples` in time.
    pub sample_dt: f64,
    /// `(t, e, ė, z1, z2)` along one period starting from the post-impact state.
    pub orbit_samples: Vec<[f64; 5]>,
    pub model: ModelParams,
    pub gait: GaitParams,
}

impl OrbitRecord {
    pub fn spectral_radius(&self) -> f64 {
        self.rho_jacobian_eigs.iter().cloned().fold(0.0, f64::max)
    }

    /// Post-impact state of the orbit.
    pub fn post_impact_state(&self) -> Result<State> {
        let plus = surface_impact(self.z_star, &self.gait, &self.model)?;
        from_transformed(&plus, &self.gait, &self.model)
    }

    pub fn pre_impact_state(&self) -> Result<State> {
        lift(self.z_star[0], self.z_star[1], &self.gait, &self.model)
    }

    /// Nearest-sample distance in `(e, ė, z1, z2)`.
    pub fn distance(&self, ts: &TransformedState) -> f64 {
        let a = ts.to_array();
        self.orbit_samples
            .iter()
            .map(|s| (0..4).map(|i| (a[i] - s[i + 1]) * (a[i] - s[i + 1])).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.gait.validate()?;
        let finite = self.z_star.iter().all(|v| v.is_finite())
            && self.t_star.is_finite()
            && self.t_star > 0.0
            && self.sample_dt.is_finite()
            && self.sample_dt > 0.0
            && self.orbit_samples.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("orbit record has non-finite or non-positive fields"));
        }
        if self.orbit_samples.is_empty() {
            return Err(Error::Empty("orbit samples"));
        }
        Ok(())
    }
}

/// Settings for the orbit search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitSearch {
    /// Initial guess for the pre-impact `z2`.
    pub z2_guess: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step for `Dρ`.
    pub fd_step: f64,
    /// Time spacing of the stored orbit samples.
    pub sample_dt: f64,
}

impl Default for OrbitSearch {
    fn default() -> Self {
        Self {
            z2_guess: 0.05,
            tol: 1e-10,
            max_iter: 50,
            fd_step: 1e-6,
            sample_dt: 1e-4,
        }
    }
}

/// `z2 ↦ ρ(z1*, z2)_2` on the section and the arrival `z1`.
fn section_map(z1: f64, z2: f64, gait: &GaitParams, p: &ModelParams, opts: &SimOptions) -> Result<HzdFlow> {
    restricted_poincare([z1, z2], gait, p, opts)
}

/// `dρ₂/dz₂` by central differences.
pub fn section_derivative(
    z_star: [f64; 2],
    step: f64,
    gait: &GaitParams,
    p: &ModelParams,
    opts: &SimOptions,
) -> Result<f64> {
    let a = section_map(z_star[0], z_star[1] + step, gait, p, opts)?.z_pre[1];
    let b = section_map(z_star[0], z_star[1] - step, gait, p, opts)?.z_pre[1];
    Ok((a - b) / (2.0 * step))
}

/// Secant iteration on `ρ₂(z1*, z2) - z2 = 0`.
pub fn find_fixed_point(
    search: &OrbitSearch,
    gait: &GaitParams,
    p: &ModelParams,
    opts: &SimOptions,
) -> Result<OrbitRecord> {
    let z1 = section_z1(gait, p, opts)?;
    let f = |z2: f64| -> Result<f64> { Ok(section_map(z1, z2, gait, p, opts)?.z_pre[1] - z2) };
    let mut x0 = search.z2_guess;
    let mut f0 = f(x0)?;
    let mut x1 = x0 * 1.01 + 1e-4;
    let mut f1 = f(x1)?;
    let mut converged = false;
    for _ in 0..search.max_iter {
        if f1.abs() < search.tol {
            converged = true;
            break;
        }
        let denom = f1 - f0;
        if denom == 0.0 {
            break;
        }
        let mut x2 = x1 - f1 * (x1 - x0) / denom;
        // keep the sign of the momentum (direction of walking)
        if x2 * search.z2_guess <= 0.0 {
            x2 = 0.5 * x1;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f(x1)?;
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "periodic orbit",
            iterations: search.max_iter,
            residual: f1.abs(),
        });
    }
    let pre = section_map(z1, x1, gait, p, opts)?;
    let residual = ((pre.z_pre[0] - z1).powi(2) + (pre.z_pre[1] - x1).powi(2)).sqrt();
    let z_star = [z1, x1];
    let eig = section_derivative(z_star, search.fd_step, gait, p, opts)?;
    let plus = surface_impact(z_star, gait, p)?;
    let dense_opts = SimOptions {
        sample_dt: search.sample_dt,
        ..*opts
    };
    let flow = hzd_flow([plus.z1, plus.z2], gait, p, &dense_opts)?;
    let orbit_samples = flow.samples.iter().map(|s| [s[0], 0.0, 0.0, s[1], s[2]]).collect();
    Ok(OrbitRecord {
        z_star,
        t_star: flow.t_impact,
        residual,
        rho_jacobian_eigs: vec![eig.abs()],
        invariance_residual: (plus.e * plus.e + plus.edot * plus.edot).sqrt(),
        sample_dt: search.sample_dt,
        orbit_samples,
        model: *p,
        gait: *gait,
    })
}

/// Iterates `ρⁱ(z_s)` for `i = 0..=n`.
pub fn rho_iterates(
    z_s: [f64; 2],
    n: usize,
    gait: &GaitParams,
    p: &ModelParams,
    opts: &SimOptions,
) -> Result<Vec<[f64; 2]>> {
    let mut out = vec![z_s];
    let mut z = z_s;
    for _ in 0..n {
        z = restricted_poincare(z, gait, p, opts)?.z_pre;
        out.push(z);
    }
    Ok(out)
}

/// Geometric rate of a sequence of distances: slope of `ln d_i` against `i`,
/// restricted to distances above `floor`.
pub fn geometric_rate(distances: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = distances
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > floor)
        .map(|(i, d)| (i as f64, d.ln()))
        .collect();
    let slope = linear_fit(&pts)?.0;
    Some(slope.exp())
}

/// Least-squares `(slope, intercept)`.
fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Full Poincaré map on the guard in transformed coordinates.
pub fn full_poincare(ts: &TransformedState, walker: &Walker) -> Result<(TransformedState, StepOutcome)> {
    let x = from_transformed(ts, &walker.gait, &walker.model)?;
    let post = impact_map(&x, &walker.model)?;
    let out = walker.swing_flow(&post, 0.0)?;
    match out.kind {
        OutcomeKind::Impact => Ok((to_transformed(&out.pre_state, &walker.gait, &walker.model), out)),
        OutcomeKind::Fall => Err(Error::Fall { t: out.time }),
        OutcomeKind::Timeout => Err(Error::Timeout {
            t_max: walker.opts.t_max,
        }),
    }
}

/// Terms of the output Lyapunov candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lyapunov {
    pub v_e: f64,
    pub v_0: f64,
    pub v_c: f64,
    pub alpha: f64,
}

pub fn lyapunov_ve(
    e: f64,
    edot: f64,
    q: &Vector2<f64>,
    gains: &Gains,
    gait: &GaitParams,
    p: &ModelParams,
) -> Result<Lyapunov> {
    let s = be_functions(q, gait, p)?.schur_e;
    let alpha = gains.k0() / (1.0 + e.abs());
    let v_0 = 0.5 * (gains.kp() * e * e + edot * s * edot);
    let v_c = alpha * e * s * edot;
    Ok(Lyapunov {
        v_e: v_0 + v_c,
        v_0,
        v_c,
        alpha,
    })
}

pub fn lyapunov_at(x: &State, gains: &Gains, gait: &GaitParams, p: &ModelParams) -> Result<Lyapunov> {
    let (e, edot) = output_error(x, gait);
    lyapunov_ve(e, edot, &x.q, gains, gait, p)
}

/// Fitted constants of `λ_min |(√k_p e, ė)|² ≤ V_e ≤ λ_max |(√k_p e, ė)|²`
/// and of the envelope `V_e(t) ≤ exp(-2ελt) V_e(0) + k₄/ε²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VeFit {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Fitted exponential rate `2ελ` of `V_e` (1/s).
    pub rate: f64,
    /// Fitted `λ`.
    pub decay: f64,
    /// Smallest `k₄` for which the envelope holds at every sample.
    pub k4: f64,
    /// Largest `V_e` over the last quarter of the samples.
    pub tail_max: f64,
}

/// `(t, V_e, |(√k_p e, ė)|²)` triples along a trace.
pub fn ve_series(
    trace: &[hybrid::Sample],
    gains: &Gains,
    gait: &GaitParams,
    p: &ModelParams,
) -> Result<Vec<(f64, f64, f64)>> {
    trace
        .iter()
        .map(|s| {
            let (e, edot) = output_error(&s.x, gait);
            let l = lyapunov_ve(e, edot, &s.x.q, gains, gait, p)?;
            Ok((s.t, l.v_e, gains.kp() * e * e + edot * edot))
        })
        .collect()
}

/// Fit the sandwich and envelope constants over a trace (one or more swings).
///
/// The rate is the log-linear slope of `V_e` from the first sample until
/// `V_e` first drops below `100×` its tail maximum.
pub fn ve_bounds_check(trace: &[hybrid::Sample], gains: &Gains, gait: &GaitParams, p: &ModelParams) -> Result<VeFit> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    let series = ve_series(trace, gains, gait, p)?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &(_, v, n) in &series {
        if n > 0.0 {
            let r = v / n;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
    }
    let tail_from = series.len() - series.len().div_ceil(4);
    let tail_max = series[tail_from..].iter().map(|s| s.1).fold(0.0, f64::max);
    let (t0, v0, _) = series[0];
    let floor = 100.0 * tail_max;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .take_while(|s| s.1 > floor && s.1 > 0.0)
        .map(|s| (s.0 - t0, s.1.ln()))
        .collect();
    let rate = linear_fit(&pts).map_or(0.0, |(slope, _)| (-slope).max(0.0));
    let decay = rate / (2.0 * gains.epsilon);
    let eps2 = gains.epsilon * gains.epsilon;
    let k4 = series
        .iter()
        .map(|&(t, v, _)| (v - (-rate * (t - t0)).exp() * v0).max(0.0) * eps2)
        .fold(0.0, f64::max);
    Ok(VeFit {
        lambda_min: lo,
        lambda_max: hi,
        rate,
        decay,
        k4,
        tail_max,
    })
}

/// Distance-to-orbit summary of a walking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// All `|eig(Dρ)| < 1`.
    pub les_hzd: bool,
    /// Largest distance to the orbit over the tail steps.
    pub ultimate_bound: f64,
    /// Orbit sampling resolution behind the distances.
    pub sample_dt: f64,
    /// Per-step maximum distance to the orbit.
    pub step_bounds: Vec<f64>,
}

pub fn ultimate_bound(steps: &[StepOutcome], orbit: &OrbitRecord, tail_start: usize) -> Result<StabilityReport> {
    let completed = steps.iter().filter(|s| s.kind == OutcomeKind::Impact).count();
    if completed < steps.len() || completed <= tail_start {
        return Err(Error::RunTooShort { completed, tail_start });
    }
    let step_bounds: Vec<f64> = steps
        .iter()
        .map(|s| {
            s.trace
                .iter()
                .map(|smp| orbit.distance(&to_transformed(&smp.x, &orbit.gait, &orbit.model)))
                .fold(0.0, f64::max)
        })
        .collect();
    let ultimate_bound = step_bounds[tail_start..].iter().cloned().fold(0.0, f64::max);
    Ok(StabilityReport {
        les_hzd: orbit.rho_jacobian_eigs.iter().all(|e| *e < 1.0),
        ultimate_bound,
        sample_dt: orbit.sample_dt,
        step_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let p = ModelParams::two_link();
        let g = GaitParams::nominal();
        let x = State::new(0.2, 0.05, -0.7, 1.1);
        let ts = to_transformed(&x, &g, &p);
        let y = from_transformed(&ts, &g, &p).unwrap();
        assert!((y.q - x.q).norm() < 1e-14);
        assert!((y.dq - x.dq).norm() < 1e-12);
    }

    #[test]
    fn zero_velocity_zero_momentum() {
        let p = ModelParams::two_link();
        let ts = to_transformed(&State::new(0.3, 0.1, 0.0, 0.0), &GaitParams::nominal(), &p);
        assert_eq!(ts.z2, 0.0);
        let x = lift(0.1, 0.0, &GaitParams::nominal(), &p).unwrap();
        assert_eq!(x.dq, Vector2::zeros());
    }

    #[test]
    fn lyapunov_gain_schedule() {
        let gains = Gains::new(10.0, 2.0).unwrap();
        let l = lyapunov_ve(
            0.0,
            0.0,
            &Vector2::new(0.1, 0.0),
            &gains,
            &GaitParams::nominal(),
            &ModelParams::two_link(),
        )
        .unwrap();
        assert_eq!(l.v_e, 0.0);
        assert_eq!(l.alpha, 5.0);
    }

    #[test]
    fn geometric_rate_of_exact_sequence() {
        let d: Vec<f64> = (0..10).map(|i| 0.3f64.powi(i)).collect();
        assert!((geometric_rate(&d, 0.0).unwrap() - 0.3).abs() < 1e-12);
    }
}
