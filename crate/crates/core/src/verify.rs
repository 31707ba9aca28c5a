//! Exact regret, discrepancy, equilibrium and largeness verifiers.
//!
//! These are the ground truth for every algorithm in the crate: they only
//! ever use exact expectations, never the sampling oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::exec::Parallelism;
use crate::game::{expected_table, for_each_profile, Game, MixedProfile, PayoffTable};

/// Probabilities above this count as support for the WSNE check.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Slack over the declared `gamma` tolerated by [`check_largeness`].
pub const LARGENESS_TOL: f64 = 1e-12;

/// Largest `k^n` accepted by the exhaustive largeness scan.
pub const EXHAUSTIVE_LIMIT: u128 = 1 << 20;

/// `(v1, v0, p)`: the payoffs of actions 1 and 0 and the probability of action 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyPayoffState {
    pub v1: f64,
    pub v0: f64,
    pub p: f64,
}

impl StrategyPayoffState {
    pub fn new(v1: f64, v0: f64, p: f64) -> Self {
        StrategyPayoffState { v1, v0, p }
    }

    /// `D = |v1 - v0|`.
    pub fn discrepancy(&self) -> f64 {
        (self.v1 - self.v0).abs()
    }

    /// Mass on the best response; action 1 counts as best on ties.
    pub fn best_response_mass(&self) -> f64 {
        if self.v1 >= self.v0 {
            self.p
        } else {
            1.0 - self.p
        }
    }

    /// `D (1 - p*)`, which equals the player's regret.
    pub fn regret(&self) -> f64 {
        self.discrepancy() * (1.0 - self.best_response_mass())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportGap {
    pub action: usize,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub regrets: Vec<f64>,
    pub max_regret: f64,
    /// Present for binary games only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrepancies: Option<Vec<f64>>,
    /// Optimality gap of each supported action, per player.
    pub support_gaps: Vec<Vec<SupportGap>>,
}

impl RegretReport {
    pub fn from_table(table: &PayoffTable, profile: &MixedProfile) -> Self {
        let n = table.players();
        let k = table.actions();
        let mut regrets = Vec::with_capacity(n);
        let mut support_gaps = Vec::with_capacity(n);
        for i in 0..n {
            let row = table.row(i);
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let current: f64 = row.iter().zip(profile.row(i)).map(|(v, q)| v * q).sum();
            regrets.push((best - current).max(0.0));
            support_gaps.push(
                (0..k)
                    .filter(|&j| profile.prob(i, j) > SUPPORT_THRESHOLD)
                    .map(|j| SupportGap { action: j, gap: best - row[j] })
                    .collect(),
            );
        }
        let discrepancies =
            (k == 2).then(|| (0..n).map(|i| (table.get(i, 0) - table.get(i, 1)).abs()).collect());
        let max_regret = regrets.iter().copied().fold(0.0, f64::max);
        RegretReport { regrets, max_regret, discrepancies, support_gaps }
    }

    pub fn is_wsne(&self, eps: f64) -> bool {
        self.support_gaps.iter().flatten().all(|g| g.gap < eps)
    }
}

pub fn regret_report<G: Game + ?Sized>(game: &G, profile: &MixedProfile) -> Result<RegretReport> {
    regret_report_with(game, profile, Parallelism::default())
}

pub fn regret_report_with<G: Game + ?Sized>(
    game: &G,
    profile: &MixedProfile,
    exec: Parallelism,
) -> Result<RegretReport> {
    let table = expected_table(game, profile, exec)?;
    Ok(RegretReport::from_table(&table, profile))
}

fn player_row<G: Game + ?Sized>(game: &G, profile: &MixedProfile, player: usize) -> Result<Vec<f64>> {
    profile.validate_for(game.players(), game.actions())?;
    if player >= game.players() {
        return arg(format!("player {player} out of range"));
    }
    let mut row = vec![0.0; game.actions()];
    game.expected_row(player, profile, &mut row)?;
    Ok(row)
}

/// `max_j E[u_i(j, a_-i)] - E[u_i(a)]`.
pub fn regret<G: Game + ?Sized>(game: &G, profile: &MixedProfile, player: usize) -> Result<f64> {
    let row = player_row(game, profile, player)?;
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let current: f64 = row.iter().zip(profile.row(player)).map(|(v, q)| v * q).sum();
    Ok((best - current).max(0.0))
}

/// `|E[u_i(0, .)] - E[u_i(1, .)]|`; binary games only.
pub fn discrepancy<G: Game + ?Sized>(game: &G, profile: &MixedProfile, player: usize) -> Result<f64> {
    if game.actions() != 2 {
        return arg("discrepancy is defined for binary-action games");
    }
    let row = player_row(game, profile, player)?;
    Ok((row[0] - row[1]).abs())
}

pub fn strategy_payoff_state<G: Game + ?Sized>(
    game: &G,
    profile: &MixedProfile,
    player: usize,
) -> Result<StrategyPayoffState> {
    if game.actions() != 2 {
        return arg("strategy/payoff states are defined for binary-action games");
    }
    let row = player_row(game, profile, player)?;
    Ok(StrategyPayoffState::new(row[1], row[0], profile.binary(player)))
}

/// True iff every player's regret is at most `eps`.
pub fn is_approx_ne<G: Game + ?Sized>(
    game: &G,
    profile: &MixedProfile,
    eps: f64,
) -> Result<(bool, RegretReport)> {
    let report = regret_report(game, profile)?;
    Ok((report.max_regret <= eps, report))
}

/// True iff every supported action is within `eps` (strictly) of a best response.
pub fn is_wsne<G: Game + ?Sized>(game: &G, profile: &MixedProfile, eps: f64) -> Result<bool> {
    Ok(regret_report(game, profile)?.is_wsne(eps))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LargenessMode {
    Exhaustive,
    Sampled { trials: usize, seed: u64 },
}

/// A unilateral deviation and its effect on another player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub profile: Vec<usize>,
    pub deviator: usize,
    pub new_action: usize,
    pub affected: usize,
    pub effect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargenessCheck {
    pub holds: bool,
    /// Largest observed `|u_i(a_j, a_-j) - u_i(a_j', a_-j)|` over `i != j`.
    pub worst_effect: f64,
    /// `worst_effect - gamma`, positive when the declaration is violated.
    pub worst_violation: f64,
    pub witness: Option<Deviation>,
    pub tested: u64,
}

/// Tests the declared largeness `gamma` against unilateral opponent deviations.
pub fn check_largeness<G: Game + ?Sized>(
    game: &G,
    gamma: f64,
    mode: LargenessMode,
) -> Result<LargenessCheck> {
    let (n, k) = (game.players(), game.actions());
    let mut worst: Option<Deviation> = None;
    let mut tested = 0u64;
    let mut consider = |a: &[usize], j: usize, alt: usize, i: usize, effect: f64| {
        tested += 1;
        if worst.as_ref().is_none_or(|w| effect > w.effect) {
            worst = Some(Deviation {
                profile: a.to_vec(),
                deviator: j,
                new_action: alt,
                affected: i,
                effect,
            });
        }
    };
    match mode {
        LargenessMode::Exhaustive => {
            let total = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
            if total > EXHAUSTIVE_LIMIT {
                return arg(format!("exhaustive scan over {total} profiles exceeds limit"));
            }
            let mut dev = vec![0usize; n];
            for_each_profile(n, k, |a| {
                dev.copy_from_slice(a);
                for j in 0..n {
                    // each unordered pair of j's actions once
                    for alt in a[j] + 1..k {
                        dev[j] = alt;
                        for i in (0..n).filter(|&i| i != j) {
                            let effect = (game.payoff(i, a) - game.payoff(i, &dev)).abs();
                            consider(a, j, alt, i, effect);
                        }
                    }
                    dev[j] = a[j];
                }
            });
        }
        LargenessMode::Sampled { trials, seed } => {
            if n < 2 || k < 2 {
                return arg("sampled largeness check needs n >= 2 and k >= 2");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = vec![0usize; n];
            let mut dev = vec![0usize; n];
            for _ in 0..trials {
                a.iter_mut().for_each(|x| *x = rng.random_range(0..k));
                let j = rng.random_range(0..n);
                let mut i = rng.random_range(0..n - 1);
                if i >= j {
                    i += 1;
                }
                let mut alt = rng.random_range(0..k - 1);
                if alt >= a[j] {
                    alt += 1;
                }
                dev.copy_from_slice(&a);
                dev[j] = alt;
                let effect = (game.payoff(i, &a) - game.payoff(i, &dev)).abs();
                consider(&a, j, alt, i, effect);
            }
        }
    }
    let worst_effect = worst.as_ref().map_or(0.0, |w| w.effect);
    Ok(LargenessCheck {
        holds: worst_effect <= gamma + LARGENESS_TOL,
        worst_effect,
        worst_violation: worst_effect - gamma,
        witness: worst,
        tested,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{ConstantGame, IndependentGame};

    fn indep() -> IndependentGame {
        IndependentGame::symmetric(2, vec![0.3, 0.7]).unwrap()
    }

    #[test]
    fn independent_game_regret_and_discrepancy() {
        let g = indep();
        let p = MixedProfile::uniform(2, 2);
        // 0.7 - (0.5 * 0.7 + 0.5 * 0.3)
        for i in 0..2 {
            assert!((regret(&g, &p, i).unwrap() - 0.2).abs() < 1e-15);
            assert!((discrepancy(&g, &p, i).unwrap() - 0.4).abs() < 1e-15);
        }
        let s = strategy_payoff_state(&g, &p, 0).unwrap();
        assert_eq!((s.v1, s.v0, s.p), (0.7, 0.3, 0.5));
        assert!((s.discrepancy() - 0.4).abs() < 1e-15);
        assert_eq!(s.best_response_mass(), 0.5);
    }

    #[test]
    fn constant_game_has_zero_discrepancy() {
        let g = ConstantGame::new(3, 2, 0.5).unwrap();
        let p = MixedProfile::from_binary(&[0.1, 0.9, 0.4]).unwrap();
        assert_eq!(discrepancy(&g, &p, 1).unwrap(), 0.0);
        assert_eq!(strategy_payoff_state(&g, &p, 2).unwrap().discrepancy(), 0.0);
        assert_eq!(regret(&g, &p, 0).unwrap(), 0.0);
    }

    #[test]
    fn discrepancy_rejects_non_binary() {
        let g = ConstantGame::new(2, 3, 0.5).unwrap();
        assert!(discrepancy(&g, &MixedProfile::uniform(2, 3), 0).is_err());
        assert!(strategy_payoff_state(&g, &MixedProfile::uniform(2, 3), 0).is_err());
    }

    #[test]
    fn ne_and_wsne_on_independent_game() {
        let g = indep();
        let uniform = MixedProfile::uniform(2, 2);
        let (ok, report) = is_approx_ne(&g, &uniform, 0.1).unwrap();
        assert!(!ok);
        assert!((report.max_regret - 0.2).abs() < 1e-15);
        assert!(is_approx_ne(&g, &uniform, 0.5).unwrap().0);
        // gap 0.4 on supported action 0
        assert!(!is_wsne(&g, &uniform, 0.3).unwrap());
        let dominant = MixedProfile::pure(&[1, 1], 2).unwrap();
        assert!(is_approx_ne(&g, &dominant, 0.0).unwrap().0);
        assert!(is_wsne(&g, &dominant, 1e-9).unwrap());
    }

    #[test]
    fn plane_state_example() {
        let s = StrategyPayoffState::new(1.0, 0.0, 1.0);
        let d = s.discrepancy();
        assert_eq!(s.best_response_mass(), (1.0 + d) / 2.0);
        assert_eq!(s.regret(), 0.0);
    }

    #[test]
    fn largeness_of_independent_games() {
        let g = IndependentGame::symmetric(4, vec![0.1, 0.9, 0.5]).unwrap();
        let c = check_largeness(&g, 0.0, LargenessMode::Exhaustive).unwrap();
        assert!(c.holds);
        assert_eq!(c.worst_effect, 0.0);
        let s = check_largeness(&g, 0.0, LargenessMode::Sampled { trials: 500, seed: 3 }).unwrap();
        assert!(s.holds);
        assert_eq!(s.tested, 500);
    }
}
