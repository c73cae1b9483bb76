//! Swing-phase integration, foot-strike detection, impact map and multi-step walking.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::integrate::{locate_crossing, Integrator, OdeSystem, Tolerances};
use crate::model::{self, ModelParams, State};
use crate::outputs::{ControlLaw, GaitParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Allowed `|h|` at a reported impact (m).
    pub guard_tol: f64,
    /// Foot strikes with `q1` at or below this are treated as scuffing and ignored.
    pub anti_scuff_q1_min: f64,
    /// Per-step time limit (s).
    pub t_max: f64,
    pub fall_hip_height_frac: f64,
    /// Trace sampling interval (s).
    pub sample_dt: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            guard_tol: 1e-10,
            anti_scuff_q1_min: 0.1,
            t_max: 5.0,
            fall_hip_height_frac: 0.2,
            sample_dt: 1e-3,
        }
    }
}

/// Bisection stops once the bracket is narrower than this (s).
pub const EVENT_TIME_TOL: f64 = 1e-12;

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("guard_tol", self.guard_tol),
            ("anti_scuff_q1_min", self.anti_scuff_q1_min),
            ("t_max", self.t_max),
            ("fall_hip_height_frac", self.fall_hip_height_frac),
            ("sample_dt", self.sample_dt),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("sim.{name} must be finite and > 0, got {v}")));
            }
        }
        if self.fall_hip_height_frac >= 1.0 {
            return Err(Error::invalid("sim.fall_hip_height_frac must be < 1"));
        }
        Ok(())
    }

    /// Also requires the scuff window to sit below the gait's final hip angle.
    pub fn validate_for(&self, gait: &GaitParams) -> Result<()> {
        self.validate()?;
        let qa_end = gait.desired(1.0).0.abs();
        if self.anti_scuff_q1_min >= qa_end {
            return Err(Error::invalid(format!(
                "sim.anti_scuff_q1_min ({}) must be below |q^a_d(1)| = {qa_end}",
                self.anti_scuff_q1_min
            )));
        }
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel: self.rel_tol,
            abs: self.abs_tol,
        }
    }
}

/// Swing-foot height above the walking surface, measured normal to it.
pub fn guard_height(q: &Vector2<f64>, p: &ModelParams) -> f64 {
    let (q1, q2) = (q[0], q[1]);
    p.l * ((q2 - p.slope).cos() - (q2 - q1 - p.slope).cos())
}

/// `∂h/∂q`.
pub fn guard_gradient(q: &Vector2<f64>, p: &ModelParams) -> Vector2<f64> {
    let (q1, q2) = (q[0], q[1]);
    let s = (q2 - q1 - p.slope).sin();
    Vector2::new(-p.l * s, p.l * (-(q2 - p.slope).sin() + s))
}

pub fn guard_rate(x: &State, p: &ModelParams) -> f64 {
    guard_gradient(&x.q, p).dot(&x.dq)
}

pub fn guard_predicate(x: &State, p: &ModelParams, opts: &SimOptions) -> bool {
    guard_height(&x.q, p).abs() <= opts.guard_tol && guard_rate(x, p) < 0.0 && x.q[0] > opts.anti_scuff_q1_min
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Row vector `w ↦ r × (J w)` as the coefficients of `w`.
fn moment_row(r: &Vector2<f64>, j: &Matrix2<f64>) -> [f64; 2] {
    [cross(r, &j.column(0).into_owned()), cross(r, &j.column(1).into_owned())]
}

/// Leg relabeling `(q1, q2) ↦ (-q1, q2 - q1)`.
pub fn relabel(q: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-q[0], q[1] - q[0])
}

/// Plastic foot strike followed by leg relabeling.
///
/// Post-impact velocities conserve angular momentum of the whole system about
/// the striking foot and of the trailing leg about the hip. The old stance foot
/// lifts off; the old swing foot becomes the new pivot.
pub fn impact_map(x: &State, p: &ModelParams) -> Result<State> {
    let pre = model::points(&x.q, p);
    let jp = model::point_jacobians(&x.q, p);
    let v_sc = jp.stance_com * x.dq;
    let v_h = jp.hip * x.dq;
    let v_sw = jp.swing_com * x.dq;
    let foot = pre.swing_foot;

    let q_post = relabel(&x.q);
    // after relabeling, positions are relative to the new pivot (old swing foot)
    let post = model::points(&q_post, p);
    let jq = model::point_jacobians(&q_post, p);

    let (m, mh) = (p.m_leg, p.m_hip);
    // whole system about the striking foot
    let h_total = m * cross(&(pre.stance_com - foot), &v_sc)
        + mh * cross(&(pre.hip - foot), &v_h)
        + m * cross(&(pre.swing_com - foot), &v_sw);
    let r1 = moment_row(&post.stance_com, &jq.stance_com);
    let r2 = moment_row(&post.hip, &jq.hip);
    let r3 = moment_row(&post.swing_com, &jq.swing_com);
    let row_total = [m * r1[0] + mh * r2[0] + m * r3[0], m * r1[1] + mh * r2[1] + m * r3[1]];
    // trailing leg (old stance, new swing) about the hip
    let h_leg = m * cross(&(pre.stance_com - pre.hip), &v_sc);
    let row_leg = moment_row(&(post.swing_com - post.hip), &jq.swing_com).map(|c| m * c);

    let a = Matrix2::new(row_total[0], row_total[1], row_leg[0], row_leg[1]);
    let b = Vector2::new(h_total, h_leg);
    let det = a.determinant();
    if !(det.abs() > 1e-14 * a.norm_squared()) {
        return Err(Error::Singular("impact momentum system"));
    }
    let dq = a.lu().solve(&b).ok_or(Error::Singular("impact momentum system"))?;
    Ok(State { q: q_post, dq })
}

/// Why a swing phase ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    Impact,
    Fall,
    Timeout,
}

/// One logged point of a swing phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: State,
    pub u: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub kind: OutcomeKind,
    /// Absolute time at which the swing phase started.
    pub t_start: f64,
    /// Swing-phase duration.
    pub time: f64,
    /// State at the end of the swing (at the foot strike for impacts).
    pub pre_state: State,
    /// Relabeled post-impact state; `Some` exactly for impacts.
    pub post_state: Option<State>,
    pub trace: Vec<Sample>,
}

/// A walker under a fixed control law.
#[derive(Debug, Clone, Copy)]
pub struct Walker {
    pub model: ModelParams,
    pub gait: GaitParams,
    pub control: ControlLaw,
    pub opts: SimOptions,
}

struct ClosedLoop<'a>(&'a Walker);

impl OdeSystem<4> for ClosedLoop<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
        let w = self.0;
        let x = State::from_array(y);
        let u = w.control.torque(&x, &w.gait, &w.model)?;
        let ddq = model::accelerations(&x, u, &w.model)?;
        Ok([y[2], y[3], ddq[0], ddq[1]])
    }
}

impl Walker {
    pub fn new(model: ModelParams, gait: GaitParams, control: ControlLaw, opts: SimOptions) -> Self {
        Self {
            model,
            gait,
            control,
            opts,
        }
    }

    pub fn torque(&self, x: &State) -> Result<f64> {
        self.control.torque(x, &self.gait, &self.model)
    }

    /// `ẋ = f(x) + g(x)u`.
    pub fn vector_field(&self, x: &State) -> Result<[f64; 4]> {
        ClosedLoop(self).rhs(0.0, &x.to_array())
    }

    fn sample(&self, t: f64, y: &[f64; 4]) -> Result<Sample> {
        let x = State::from_array(y);
        Ok(Sample {
            t,
            x,
            u: self.torque(&x)?,
        })
    }

    fn fallen(&self, y: &[f64; 4]) -> bool {
        let q2 = y[1];
        q2.abs() > std::f64::consts::FRAC_PI_2 || q2.cos() < self.opts.fall_hip_height_frac
    }

    /// Integrate one swing phase from a post-impact state starting at absolute time `t_start`.
    pub fn swing_flow(&self, x0: &State, t_start: f64) -> Result<StepOutcome> {
        if !x0.is_finite() {
            return Err(Error::NonFinite { t: t_start });
        }
        let sys = ClosedLoop(self);
        let p = &self.model;
        let t_end = t_start + self.opts.t_max;
        let mut it = Integrator::new(t_start, x0.to_array(), self.opts.tolerances());
        let dt = self.opts.sample_dt;
        let mut trace = vec![self.sample(t_start, &x0.to_array())?];
        let mut next_sample = 1u64;
        let h_of = |y: &[f64; 4]| guard_height(&Vector2::new(y[0], y[1]), p);
        let finish = |kind, t: f64, y: &[f64; 4], post, mut trace: Vec<Sample>| -> Result<StepOutcome> {
            if trace.last().is_none_or(|s| s.t < t) {
                trace.push(self.sample(t, y)?);
            }
            Ok(StepOutcome {
                kind,
                t_start,
                time: t - t_start,
                pre_state: State::from_array(y),
                post_state: post,
                trace,
            })
        };

        loop {
            let step = it.advance(&sys, t_end)?;
            let (g0, g1) = (h_of(&step.y0), h_of(&step.y1));
            let strike = g0 > 0.0 && g1 <= 0.0 && step.y1[0] > self.opts.anti_scuff_q1_min;
            // the event (if any) truncates this step; sample only before it
            let (t_stop, stop_y, kind) = if strike {
                let (te, ye) = locate_crossing(&sys, &step, h_of, self.opts.guard_tol, EVENT_TIME_TOL)?;
                if ye[0] > self.opts.anti_scuff_q1_min {
                    (te, ye, Some(OutcomeKind::Impact))
                } else {
                    (step.t1, step.y1, None)
                }
            } else {
                (step.t1, step.y1, None)
            };
            loop {
                let ts = t_start + next_sample as f64 * dt;
                if ts >= t_stop || (kind.is_none() && ts > step.t1) {
                    break;
                }
                let ys = step.state_at(&sys, ts)?;
                trace.push(self.sample(ts, &ys)?);
                next_sample += 1;
            }
            if kind == Some(OutcomeKind::Impact) {
                let pre = State::from_array(&stop_y);
                let post = impact_map(&pre, p)?;
                return finish(OutcomeKind::Impact, t_stop, &stop_y, Some(post), trace);
            }
            if self.fallen(&step.y1) {
                return finish(OutcomeKind::Fall, step.t1, &step.y1, None, trace);
            }
            if step.t1 >= t_end {
                return finish(OutcomeKind::Timeout, step.t1, &step.y1, None, trace);
            }
        }
    }

    /// Dwell time from a pre-impact state on the guard: `∞` when the next swing
    /// does not end in a foot strike.
    pub fn time_to_impact(&self, x_pre: &State) -> Result<f64> {
        let post = impact_map(x_pre, &self.model)?;
        let out = self.swing_flow(&post, 0.0)?;
        Ok(match out.kind {
            OutcomeKind::Impact => out.time,
            _ => f64::INFINITY,
        })
    }

    /// Up to `n_steps` swing phases from the post-impact state `x0`.
    pub fn walk(&self, x0: &State, n_steps: usize) -> Result<Vec<StepOutcome>> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        let mut out = Vec::with_capacity(n_steps);
        let mut x = *x0;
        let mut t = 0.0;
        for _ in 0..n_steps {
            let s = self.swing_flow(&x, t)?;
            t += s.time;
            let next = s.post_state;
            out.push(s);
            match next {
                Some(post) => x = post,
                None => break,
            }
        }
        Ok(out)
    }
}

/// Pre-impact states of the steps that ended in a foot strike.
pub fn poincare_samples(steps: &[StepOutcome]) -> Vec<State> {
    steps
        .iter()
        .filter(|s| s.kind == OutcomeKind::Impact)
        .map(|s| s.pre_state)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ModelParams {
        ModelParams::two_link()
    }

    #[test]
    fn flat_guard_special_cases() {
        let flat = ModelParams { slope: 0.0, ..p() };
        assert_eq!(guard_height(&Vector2::new(0.0, 0.3), &flat), 0.0);
        assert!(guard_height(&Vector2::new(0.4, 0.2), &flat).abs() < 1e-16);
        // swing leg steeper than the stance leg: foot above ground
        assert!(guard_height(&Vector2::new(0.5, 0.2), &flat) > 0.0);
        // swing leg closer to vertical: foot below ground
        assert!(guard_height(&Vector2::new(0.1, 0.2), &flat) < 0.0);
    }

    #[test]
    fn guard_gradient_matches_finite_difference() {
        let m = p();
        let q = Vector2::new(0.35, 0.21);
        let g = guard_gradient(&q, &m);
        let d = 1e-6;
        for i in 0..2 {
            let mut a = q;
            let mut b = q;
            a[i] += d;
            b[i] -= d;
            let fd = (guard_height(&a, &m) - guard_height(&b, &m)) / (2.0 * d);
            assert!((fd - g[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn impact_at_rest_only_relabels() {
        let x = State::new(0.5, 0.35, 0.0, 0.0);
        let y = impact_map(&x, &p()).unwrap();
        assert!((y.q - Vector2::new(-0.5, -0.15)).norm() < 1e-15);
        assert_eq!(y.dq, Vector2::zeros());
    }

    #[test]
    fn impact_keeps_hip_and_dissipates() {
        let m = p();
        let q1: f64 = 0.55;
        let x = State::new(q1, q1 / 2.0 + m.slope, -0.4, 1.3);
        let y = impact_map(&x, &m).unwrap();
        let before = model::points(&x.q, &m);
        let after = model::points(&y.q, &m);
        let hip_after = after.hip + before.swing_foot;
        assert!((hip_after - before.hip).norm() < 1e-12);
        assert!(model::kinetic_energy(&y, &m) <= model::kinetic_energy(&x, &m));
        assert!(guard_height(&y.q, &m).abs() < 1e-12);
        assert!(!guard_predicate(&y, &m, &SimOptions::default()));
    }

    #[test]
    fn tiny_time_limit_times_out() {
        let w = Walker::new(
            p(),
            GaitParams::nominal(),
            ControlLaw::Passive,
            SimOptions {
                t_max: 1e-3,
                ..Default::default()
            },
        );
        let out = w.swing_flow(&State::new(-0.4, -0.1, 1.0, 1.0), 0.0).unwrap();
        assert_eq!(out.kind, OutcomeKind::Timeout);
        assert!((out.time - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_rejected() {
        let w = Walker::new(p(), GaitParams::nominal(), ControlLaw::Passive, SimOptions::default());
        assert!(w.walk(&State::new(0.0, 0.0, 0.0, 0.0), 0).is_err());
    }

    #[test]
    fn options_validation() {
        assert!(SimOptions::default().validate_for(&GaitParams::nominal()).is_ok());
        let bad = SimOptions {
            anti_scuff_q1_min: 0.6,
            ..Default::default()
        };
        assert!(bad.validate_for(&GaitParams::nominal()).is_err());
        assert!(SimOptions {
            t_max: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
