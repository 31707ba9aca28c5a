//! Machine-readable run summaries.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::exec::Parallelism;
use crate::game::{Game, MixedProfile};
use crate::oracle::OracleSession;
use crate::verify::regret_report_with;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl RegretSummary {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return RegretSummary { min: 0.0, mean: 0.0, median: 0.0, p90: 0.0, max: 0.0 };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
        RegretSummary {
            min: v[0],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: at(0.5),
            p90: at(0.9),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub c: f64,
    pub rounds: u64,
    pub pure_queries: u64,
    pub qm_calls: u64,
    pub max_regret: f64,
    pub per_player_regret_summary: RegretSummary,
    pub final_profile_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation_digest: Option<String>,
}

impl RunReport {
    /// Summarises a finished run. Regret is computed exactly from the game,
    /// without touching the session's counters.
    pub fn finish(
        algorithm: &str,
        params: serde_json::Value,
        session: &OracleSession<'_>,
        rounds: u64,
        profile: &MixedProfile,
    ) -> Result<RunReport> {
        let game = session.game();
        let regrets = regret_report_with(game, profile, session.parallelism())?;
        Ok(RunReport {
            algorithm: algorithm.to_string(),
            params,
            seed: session.seed(),
            n: game.players(),
            k: (game.actions() != 2).then_some(game.actions()),
            c: game.largeness(),
            rounds,
            pure_queries: session.pure_queries(),
            qm_calls: session.qm_calls(),
            max_regret: regrets.max_regret,
            per_player_regret_summary: RegretSummary::from_values(&regrets.regrets),
            final_profile_digest: profile_digest(profile),
            blocks: None,
            allocation_digest: None,
        })
    }

    /// Report for a profile that was not produced through a session.
    pub fn for_profile<G: Game + ?Sized>(
        algorithm: &str,
        params: serde_json::Value,
        game: &G,
        seed: u64,
        rounds: u64,
        profile: &MixedProfile,
        exec: Parallelism,
    ) -> Result<RunReport> {
        let regrets = regret_report_with(game, profile, exec)?;
        Ok(RunReport {
            algorithm: algorithm.to_string(),
            params,
            seed,
            n: game.players(),
            k: (game.actions() != 2).then_some(game.actions()),
            c: game.largeness(),
            rounds,
            pure_queries: 0,
            qm_calls: 0,
            max_regret: regrets.max_regret,
            per_player_regret_summary: RegretSummary::from_values(&regrets.regrets),
            final_profile_digest: profile_digest(profile),
            blocks: None,
            allocation_digest: None,
        })
    }
}

/// sha256 over `n`, `k` and the little-endian bytes of every probability.
pub fn profile_digest(profile: &MixedProfile) -> String {
    let mut h = Sha256::new();
    h.update((profile.players() as u64).to_le_bytes());
    h.update((profile.actions() as u64).to_le_bytes());
    for x in profile.as_flat() {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_values() {
        let s = RegretSummary::from_values(&[0.3, 0.1, 0.2]);
        assert_eq!((s.min, s.median, s.max), (0.1, 0.2, 0.3));
        assert!((s.mean - 0.2).abs() < 1e-15);
    }

    #[test]
    fn digest_distinguishes_profiles() {
        let a = MixedProfile::uniform(3, 2);
        let b = MixedProfile::from_binary(&[0.5, 0.5, 0.6]).unwrap();
        assert_eq!(profile_digest(&a), profile_digest(&a.clone()));
        assert_ne!(profile_digest(&a), profile_digest(&b));
        assert_eq!(profile_digest(&a).len(), 64);
    }
}
