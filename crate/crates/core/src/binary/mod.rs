//! Equilibrium procedures for two-action games.

mod dynamics;
pub mod plane;
mod warmup;

use serde::{Deserialize, Serialize};

pub use dynamics::{
    communication_dynamic, ucn_gamma_discrete, un, BadGoodLabeling, BAD_REGRET, COMMUNICATION_BOUND,
    FINAL_SHIFT, REPAIR_SHIFT,
};
pub use plane::{PlaneGeometry, UNParams};
pub use warmup::{
    one_step, two_step, uniform_profile, uniform_run, OneStepParams, WARMUP_BETA, WARMUP_ETA,
};

use crate::error::{arg, Result};
use crate::game::{MixedProfile, PayoffTable};
use crate::oracle::{Estimator, OracleSession};
use crate::report::RunReport;

/// How mixed payoffs are obtained during a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleMode {
    /// Exact expectations (testing mode).
    #[default]
    Exact,
    /// Sampling estimator. `None` selects each algorithm's default.
    Sampled {
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
    },
}

impl OracleMode {
    pub fn sampled() -> Self {
        OracleMode::Sampled { beta: None, delta: None }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, OracleMode::Exact)
    }

    pub fn estimator(&self, default_beta: f64, default_delta: f64) -> Estimator {
        match *self {
            OracleMode::Exact => Estimator::Exact,
            OracleMode::Sampled { beta, delta } => Estimator::Sampled {
                beta: beta.unwrap_or(default_beta),
                delta: delta.unwrap_or(default_delta),
            },
        }
    }
}

/// Observed payoffs at the start of one round, with the profile they were
/// observed at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSnapshot {
    pub p: Vec<f64>,
    pub v1: Vec<f64>,
    pub v0: Vec<f64>,
}

impl RoundSnapshot {
    fn new(profile: &MixedProfile, table: &PayoffTable) -> Self {
        let n = profile.players();
        RoundSnapshot {
            p: profile.binary_vec(),
            v1: (0..n).map(|i| table.get(i, 1)).collect(),
            v0: (0..n).map(|i| table.get(i, 0)).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BinaryRun {
    pub profile: MixedProfile,
    pub report: RunReport,
    pub history: Vec<RoundSnapshot>,
}

fn require_binary(session: &OracleSession<'_>) -> Result<()> {
    if session.game().actions() != 2 {
        return arg("binary algorithm needs a two-action game");
    }
    Ok(())
}

pub(crate) fn estimator_json(est: Estimator) -> serde_json::Value {
    match est {
        Estimator::Exact => serde_json::json!({"mode": "exact"}),
        Estimator::Sampled { beta, delta } => {
            serde_json::json!({"mode": "sampled", "beta": beta, "delta": delta})
        }
    }
}
