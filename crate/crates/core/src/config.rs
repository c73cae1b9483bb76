//! TOML scenario files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::hybrid::SimOptions;
use crate::hzd::OrbitSearch;
use crate::model::{ModelParams, State};
use crate::outputs::{Gains, GaitParams, NOMINAL_ZETA};
use crate::{Error, Result};

/// Gait section: the polynomial plus whether to refine the phase endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitConfig {
    #[serde(default = "nominal_zeta")]
    pub zeta: [f64; 6],
    pub q0: f64,
    pub qf: f64,
    /// Refine `(q0, qf)` so that impacts map the zero surface into itself.
    #[serde(default)]
    pub calibrate: bool,
}

fn nominal_zeta() -> [f64; 6] {
    NOMINAL_ZETA
}

impl GaitConfig {
    pub fn params(&self) -> GaitParams {
        GaitParams {
            zeta: self.zeta,
            q0: self.q0,
            qf: self.qf,
        }
    }
}

/// Explicit start state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitState {
    pub q: [f64; 2],
    pub dq: [f64; 2],
}

/// `"fixed_point"` (post-impact state of the periodic orbit) or an explicit state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Named(String),
    Explicit(ExplicitState),
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Named("fixed_point".into())
    }
}

/// Offsets applied to the start state, in transformed coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    /// Added to the output `e` (rad).
    pub e: f64,
    /// Added to `ė` (rad/s).
    pub edot: f64,
    /// Multiplies `z2`.
    pub z2_scale: f64,
    /// Half-width of an extra uniform random offset on `(e, ė)` drawn from `--seed`.
    pub random_radius: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            e: 0.0,
            edot: 0.0,
            z2_scale: 1.0,
            random_radius: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelParams,
    pub gait: GaitConfig,
    pub gains: Vec<Gains>,
    #[serde(default)]
    pub sim: SimOptions,
    #[serde(default)]
    pub orbit: OrbitSearch,
    pub n_steps: usize,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default)]
    pub perturbation: Perturbation,
    /// Output directory; the command line may override it.
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let gait = self.gait.params();
        gait.validate()?;
        self.sim.validate_for(&gait)?;
        if self.gains.is_empty() {
            return Err(Error::invalid("gains list is empty"));
        }
        for g in &self.gains {
            g.validate()?;
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        match &self.initial_state {
            InitialState::Named(n) if n == "fixed_point" => {}
            InitialState::Named(n) => {
                return Err(Error::invalid(format!(
                    "initial_state must be \"fixed_point\" or a table with q and dq, got \"{n}\""
                )))
            }
            InitialState::Explicit(s) => {
                if !s.q.iter().chain(&s.dq).all(|v| v.is_finite()) {
                    return Err(Error::invalid("initial_state must be finite"));
                }
            }
        }
        let pt = &self.perturbation;
        if !(pt.e.is_finite() && pt.edot.is_finite() && pt.z2_scale.is_finite()) {
            return Err(Error::invalid("perturbation must be finite"));
        }
        if !(pt.random_radius.is_finite() && pt.random_radius >= 0.0) {
            return Err(Error::invalid("perturbation.random_radius must be >= 0"));
        }
        let o = &self.orbit;
        if !(o.z2_guess.is_finite() && o.z2_guess != 0.0) {
            return Err(Error::invalid("orbit.z2_guess must be finite and nonzero"));
        }
        if !(o.tol > 0.0 && o.fd_step > 0.0 && o.sample_dt > 0.0 && o.max_iter > 0) {
            return Err(Error::invalid(
                "orbit.tol, fd_step, sample_dt and max_iter must be positive",
            ));
        }
        Ok(())
    }

    pub fn explicit_start(&self) -> Option<State> {
        match self.initial_state {
            InitialState::Explicit(s) => Some(State::new(s.q[0], s.q[1], s.dq[0], s.dq[1])),
            InitialState::Named(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n_steps = 3
[model]
m_leg = 0.103
m_hip = 0.068
l = 0.5
l_c = 0.33
gravity = 9.81
slope = 0.1
[gait]
q0 = -0.18765
qf = 0.38765
[[gains]]
epsilon = 10.0
k = 2.0
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.gait.zeta, NOMINAL_ZETA);
        assert_eq!(c.sim, SimOptions::default());
        assert_eq!(c.initial_state, InitialState::default());
        assert!(!c.gait.calibrate);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let again = ScenarioConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_bad_values() {
        let long_com = MINIMAL.replace("l_c = 0.33", "l_c = 0.6");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&long_com),
            Err(Error::Invalid(_))
        ));
        let no_gains = MINIMAL
            .replace("[[gains]]\nepsilon = 10.0\nk = 2.0\n", "")
            .replace("n_steps = 3", "n_steps = 3\ngains = []");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&no_gains),
            Err(Error::Invalid(_))
        ));
        let unknown = MINIMAL.replace("n_steps = 3", "n_steps = 3\nbogus = 1");
        assert!(matches!(ScenarioConfig::from_toml_str(&unknown), Err(Error::Parse(_))));
        let named = MINIMAL.replace("n_steps = 3", "n_steps = 3\ninitial_state = \"standing\"");
        assert!(ScenarioConfig::from_toml_str(&named).is_err());
    }

    #[test]
    fn explicit_state() {
        let s = MINIMAL.replace(
            "n_steps = 3",
            "n_steps = 3\ninitial_state = { q = [-0.4, -0.2], dq = [1.0, 0.5] }",
        );
        let c = ScenarioConfig::from_toml_str(&s).unwrap();
        assert_eq!(c.explicit_start(), Some(State::new(-0.4, -0.2, 1.0, 0.5)));
    }
}
