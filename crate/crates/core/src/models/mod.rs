//! Count construction, the exploration/exploitation mixture and its
//! time-decayed variant, EM fitting of per-user weights, decay-rate tuning,
//! and the popularity / personal-favourite baselines.

mod counts;
mod dump;
mod em;
mod scoring;
mod tune;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use counts::{CountStats, Normalization};
pub use dump::{ModelDump, UserSummary, MODEL_HEADER};
pub use em::{em_fit, em_fit_user, EmConfig, HeldOut};
pub use scoring::{
    global_score, mix, mixture_score, mixture_score_with, personal_score, rank_positions, theta_individual,
    theta_population, top_n, MixtureParams, ScoredList, UserFit,
};
pub use tune::{default_lambda_grid, mixture_objective, tune_lambda, LambdaTuning, Objective, TuneConfig};

use crate::eval::EvalError;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("decay rate must lie in (0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("event on day {day} is after the anchor day {anchor}")]
    EventAfterAnchor { day: u32, anchor: u32 },
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("no fitted mixture weight for user `{0}`")]
    MissingWeight(String),
    #[error("item universe is empty")]
    EmptyUniverse,
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("model dump line {line}: {reason}")]
    Dump { line: usize, reason: String },
    #[error(transparent)]
    Metric(#[from] EvalError),
}

/// Recommendation method evaluated by the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mixture,
    MixtureTw,
    Global,
    Personal,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mixture, Method::MixtureTw, Method::Global, Method::Personal];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mixture => "mixture",
            Method::MixtureTw => "mixture_tw",
            Method::Global => "global",
            Method::Personal => "personal",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mixture" => Ok(Method::Mixture),
            "mixture_tw" | "mixturetw" => Ok(Method::MixtureTw),
            "global" => Ok(Method::Global),
            "personal" => Ok(Method::Personal),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}
