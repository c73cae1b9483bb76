#![allow(dead_code)]

use std::sync::OnceLock;

use pdwalker::hybrid::SimOptions;
use pdwalker::hzd::{calibrate_phase_endpoints, find_fixed_point, OrbitRecord, OrbitSearch};
use pdwalker::integrate::{Integrator, Tolerances};
use pdwalker::model::ModelParams;
use pdwalker::outputs::GaitParams;
use pdwalker::Result;

/// Endpoints of the bundled configuration before calibration.
pub fn slope_gait(p: &ModelParams) -> GaitParams {
    let half = GaitParams::nominal().qf;
    GaitParams {
        q0: p.slope - half,
        qf: p.slope + half,
        ..GaitParams::nominal()
    }
}

pub fn calibrated() -> &'static GaitParams {
    static G: OnceLock<GaitParams> = OnceLock::new();
    G.get_or_init(|| {
        let p = ModelParams::two_link();
        calibrate_phase_endpoints(&slope_gait(&p), &p, &SimOptions::default()).unwrap()
    })
}

pub fn orbit() -> &'static OrbitRecord {
    static O: OnceLock<OrbitRecord> = OnceLock::new();
    O.get_or_init(|| {
        let search = OrbitSearch {
            z2_guess: 0.1,
            ..Default::default()
        };
        find_fixed_point(&search, calibrated(), &ModelParams::two_link(), &SimOptions::default()).unwrap()
    })
}

/// Integrate `f` from `y0` over `[0, t_end]` without events.
pub fn integrate<F>(f: F, y0: [f64; 4], t_end: f64) -> Result<[f64; 4]>
where
    F: Fn(f64, &[f64; 4]) -> Result<[f64; 4]>,
{
    let mut it = Integrator::new(0.0, y0, Tolerances { rel: 1e-11, abs: 1e-13 });
    while it.t < t_end {
        it.advance(&f, t_end)?;
    }
    Ok(it.y)
}
