use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("singular {0}")]
    Singular(&'static str),

    #[error("integrator step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("walker fell at t = {t}")]
    Fall { t: f64 },

    #[error("no impact before t_max = {t_max}")]
    Timeout { t_max: f64 },

    #[error("state left the analysis tube: {0}")]
    LeftTube(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("run ended at step {completed}, before tail start {tail_start}")]
    RunTooShort { completed: usize, tail_start: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
