use thiserror::Error;

use crate::model::Site;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("site {site} lies outside window bounds [{lo}, {hi}]")]
    OutsideWindow { site: Site, lo: Site, hi: Site },

    #[error("spike applied at inactive site {0}")]
    InactiveSpike(Site),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {t} exceeds realization horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("state space too large: 2N+1 = {sites} sites exceeds the limit of {limit}")]
    Capacity { sites: usize, limit: usize },

    #[error("absorbing state unreachable from state {0:#b}")]
    AbsorbingUnreachable(u32),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("no finite extinction quantile: {0}")]
    Divergent(String),

    #[error("censored samples present ({0}); raise the horizon cap")]
    Censored(usize),

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("quantile falls in the censored tail")]
    QuantileCensored,

    #[error("margin rule violated: {0}")]
    Margin(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
