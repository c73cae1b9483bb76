//! Scenario preparation and per-gain walking runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ScenarioConfig;
use crate::hybrid::{guard_height, OutcomeKind, Sample, SimOptions, StepOutcome, Walker};
use crate::hzd::{self, calibrate_phase_endpoints, find_fixed_point, from_transformed, to_transformed, OrbitRecord};
use crate::model::{self, ModelParams, State};
use crate::outputs::{ControlLaw, Gains, GaitParams};
use crate::{Error, Result};

/// A configuration resolved into everything a run needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelParams,
    /// Gait after optional endpoint calibration.
    pub gait: GaitParams,
    pub sim: SimOptions,
    pub orbit: OrbitRecord,
    pub start: State,
    pub n_steps: usize,
    pub gains: Vec<Gains>,
}

/// The gait a configuration actually walks with.
pub fn resolve_gait(cfg: &ScenarioConfig) -> Result<GaitParams> {
    let g = cfg.gait.params();
    if cfg.gait.calibrate {
        calibrate_phase_endpoints(&g, &cfg.model, &cfg.sim)
    } else {
        Ok(g)
    }
}

pub fn find_orbit(cfg: &ScenarioConfig) -> Result<OrbitRecord> {
    let gait = resolve_gait(cfg)?;
    find_fixed_point(&cfg.orbit, &gait, &cfg.model, &cfg.sim)
}

impl Scenario {
    pub fn prepare(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        let orbit = find_orbit(cfg)?;
        Self::with_orbit(cfg, orbit, seed)
    }

    /// Use a previously computed orbit; it must belong to the same model and gait.
    pub fn with_orbit(cfg: &ScenarioConfig, orbit: OrbitRecord, seed: u64) -> Result<Self> {
        cfg.validate()?;
        orbit.validate()?;
        let gait = resolve_gait(cfg)?;
        if orbit.model != cfg.model {
            return Err(Error::invalid(
                "orbit record was computed for different model parameters",
            ));
        }
        let same_gait = orbit.gait.zeta == gait.zeta
            && (orbit.gait.q0 - gait.q0).abs() < 1e-9
            && (orbit.gait.qf - gait.qf).abs() < 1e-9;
        if !same_gait {
            return Err(Error::invalid("orbit record was computed for a different gait"));
        }
        let base = match cfg.explicit_start() {
            Some(x) => x,
            None => orbit.post_impact_state()?,
        };
        let pt = &cfg.perturbation;
        let mut ts = to_transformed(&base, &orbit.gait, &cfg.model);
        ts.e += pt.e;
        ts.edot += pt.edot;
        ts.z2 *= pt.z2_scale;
        if pt.random_radius > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = pt.random_radius;
            ts.e += rng.gen_range(-r..=r);
            ts.edot += rng.gen_range(-r..=r);
        }
        let start = from_transformed(&ts, &orbit.gait, &cfg.model)?;
        Ok(Self {
            model: cfg.model,
            gait: orbit.gait,
            sim: cfg.sim,
            orbit,
            start,
            n_steps: cfg.n_steps,
            gains: cfg.gains.clone(),
        })
    }

    pub fn walker(&self, gains: Gains) -> Walker {
        Walker::new(self.model, self.gait, ControlLaw::Pd(gains), self.sim)
    }

    pub fn run_gain(&self, gains: Gains) -> Result<GainRun> {
        let steps = self.walker(gains).walk(&self.start, self.n_steps)?;
        GainRun::new(gains, steps, &self.orbit)
    }
}

/// One row of the Poincaré log: the pre-impact state of a completed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareRow {
    /// 1-based step index.
    pub step: usize,
    /// Step duration.
    pub t: f64,
    pub ts: hzd::TransformedState,
    pub dist_to_orbit: f64,
}

#[derive(Debug, Clone)]
pub struct GainRun {
    pub gains: Gains,
    pub steps: Vec<StepOutcome>,
    pub poincare: Vec<PoincareRow>,
    /// 1-based index of the step that ended in a fall or timeout.
    pub failed_at: Option<(usize, OutcomeKind)>,
}

impl GainRun {
    pub fn new(gains: Gains, steps: Vec<StepOutcome>, orbit: &OrbitRecord) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Empty("steps"));
        }
        let poincare = steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == OutcomeKind::Impact)
            .map(|(i, s)| {
                let ts = to_transformed(&s.pre_state, &orbit.gait, &orbit.model);
                PoincareRow {
                    step: i + 1,
                    t: s.time,
                    ts,
                    dist_to_orbit: orbit.distance(&ts),
                }
            })
            .collect();
        let last = steps.last().map(|s| s.kind);
        let failed_at = match last {
            Some(OutcomeKind::Impact) | None => None,
            Some(k) => Some((steps.len(), k)),
        };
        Ok(Self {
            gains,
            steps,
            poincare,
            failed_at,
        })
    }

    pub fn completed(&self) -> usize {
        self.poincare.len()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.steps.iter().flat_map(|s| s.trace.iter())
    }
}

/// Column names of [`trace_row`].
pub const TRACE_COLUMNS: [&str; 13] = [
    "t", "q1", "q2", "dq1", "dq2", "e", "edot", "z1", "z2", "u", "h", "V_e", "E",
];

pub const POINCARE_COLUMNS: [&str; 7] = ["step", "T", "e", "edot", "z1", "z2", "dist_to_orbit"];

/// Column names of the Lyapunov log: the 1-based step index, then [`lyapunov_row`].
pub const LYAPUNOV_COLUMNS: [&str; 6] = ["step", "t", "V_e", "V_0", "V_c", "alpha"];

pub fn trace_row(s: &Sample, gains: &Gains, gait: &GaitParams, p: &ModelParams) -> Result<[f64; 13]> {
    let ts = to_transformed(&s.x, gait, p);
    let v = hzd::lyapunov_ve(ts.e, ts.edot, &s.x.q, gains, gait, p)?;
    Ok([
        s.t,
        s.x.q[0],
        s.x.q[1],
        s.x.dq[0],
        s.x.dq[1],
        ts.e,
        ts.edot,
        ts.z1,
        ts.z2,
        s.u,
        guard_height(&s.x.q, p),
        v.v_e,
        model::total_energy(&s.x, p),
    ])
}

pub fn lyapunov_row(s: &Sample, gains: &Gains, gait: &GaitParams, p: &ModelParams) -> Result<[f64; 5]> {
    let v = hzd::lyapunov_at(&s.x, gains, gait, p)?;
    Ok([s.t, v.v_e, v.v_0, v.v_c, v.alpha])
}

/// [`POINCARE_COLUMNS`] after the step index.
pub fn poincare_row(r: &PoincareRow) -> [f64; 6] {
    [r.t, r.ts.e, r.ts.edot, r.ts.z1, r.ts.z2, r.dist_to_orbit]
}
