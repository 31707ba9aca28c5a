//! Game representation, profiles and exact expected-payoff evaluation.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::exec::Parallelism;

/// Largest number of opponent profiles the brute-force expectation will visit.
pub const ENUMERATION_LIMIT: u128 = 1 << 24;

/// Tolerance used when validating that a probability vector sums to one.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// An `n`-player, `k`-action game with payoffs in `[0, 1]`.
///
/// Implementors declare a largeness numerator `c`: a unilateral change of
/// one player's action moves any other player's payoff by at most `c / n`.
pub trait Game: Send + Sync {
    fn players(&self) -> usize;
    fn actions(&self) -> usize;
    /// Largeness numerator `c`.
    fn largeness(&self) -> f64;

    /// `u_i(a)`; for stochastic games this is the mean payoff.
    fn payoff(&self, player: usize, profile: &[usize]) -> f64;

    /// One realised payoff. Deterministic games return [`Game::payoff`].
    fn sample_payoff(&self, player: usize, profile: &[usize], rng: &mut dyn RngCore) -> f64 {
        let _ = rng;
        self.payoff(player, profile)
    }

    fn is_stochastic(&self) -> bool {
        false
    }

    /// Whether [`Game::expected_row`] uses a closed form rather than enumeration.
    fn has_fast_expectation(&self) -> bool {
        false
    }

    /// Writes `E_{a_-i ~ p_-i}[u_i(j, a_-i)]` for every action `j` into `out`.
    fn expected_row(&self, player: usize, profile: &MixedProfile, out: &mut [f64]) -> Result<()> {
        enumerate_expected_row(self, player, profile, out)
    }

    fn gamma(&self) -> f64 {
        self.largeness() / self.players() as f64
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn players(&self) -> usize {
        (**self).players()
    }
    fn actions(&self) -> usize {
        (**self).actions()
    }
    fn largeness(&self) -> f64 {
        (**self).largeness()
    }
    fn payoff(&self, player: usize, profile: &[usize]) -> f64 {
        (**self).payoff(player, profile)
    }
    fn sample_payoff(&self, player: usize, profile: &[usize], rng: &mut dyn RngCore) -> f64 {
        (**self).sample_payoff(player, profile, rng)
    }
    fn is_stochastic(&self) -> bool {
        (**self).is_stochastic()
    }
    fn has_fast_expectation(&self) -> bool {
        (**self).has_fast_expectation()
    }
    fn expected_row(&self, player: usize, profile: &MixedProfile, out: &mut [f64]) -> Result<()> {
        (**self).expected_row(player, profile, out)
    }
}

impl<G: Game + ?Sized> Game for Box<G> {
    fn players(&self) -> usize {
        (**self).players()
    }
    fn actions(&self) -> usize {
        (**self).actions()
    }
    fn largeness(&self) -> f64 {
        (**self).largeness()
    }
    fn payoff(&self, player: usize, profile: &[usize]) -> f64 {
        (**self).payoff(player, profile)
    }
    fn sample_payoff(&self, player: usize, profile: &[usize], rng: &mut dyn RngCore) -> f64 {
        (**self).sample_payoff(player, profile, rng)
    }
    fn is_stochastic(&self) -> bool {
        (**self).is_stochastic()
    }
    fn has_fast_expectation(&self) -> bool {
        (**self).has_fast_expectation()
    }
    fn expected_row(&self, player: usize, profile: &MixedProfile, out: &mut [f64]) -> Result<()> {
        (**self).expected_row(player, profile, out)
    }
}

/// One action per player.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PureProfile(Vec<usize>);

impl PureProfile {
    pub fn new(actions: Vec<usize>) -> Self {
        PureProfile(actions)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        check_pure(&self.0, n, k)
    }
}

impl From<Vec<usize>> for PureProfile {
    fn from(v: Vec<usize>) -> Self {
        PureProfile(v)
    }
}

pub(crate) fn check_pure(actions: &[usize], n: usize, k: usize) -> Result<()> {
    if actions.len() != n {
        return arg(format!("profile has {} entries, game has {n} players", actions.len()));
    }
    if let Some(a) = actions.iter().find(|&&a| a >= k) {
        return arg(format!("action {a} out of range for {k} actions"));
    }
    Ok(())
}

/// Per-player probability vectors, stored flat (`n * k`).
///
/// For binary games [`MixedProfile::binary`] exposes the probability of
/// action 1, which is how the binary algorithms parameterise a strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct MixedProfile {
    k: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    k: usize,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<ProfileRepr> for MixedProfile {
    type Error = Error;
    fn try_from(r: ProfileRepr) -> Result<Self> {
        if r.probs.iter().any(|row| row.len() != r.k) {
            return arg("profile rows must have k entries");
        }
        MixedProfile::from_rows(r.probs)
    }
}

impl From<MixedProfile> for ProfileRepr {
    fn from(p: MixedProfile) -> Self {
        ProfileRepr {
            k: p.k,
            probs: p.probs.chunks(p.k).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl MixedProfile {
    pub fn uniform(n: usize, k: usize) -> Self {
        MixedProfile { k, probs: vec![1.0 / k as f64; n * k] }
    }

    /// Binary profile from the probabilities of action 1.
    pub fn from_binary(p1: &[f64]) -> Result<Self> {
        let mut probs = Vec::with_capacity(2 * p1.len());
        for &p in p1 {
            if !(0.0..=1.0).contains(&p) {
                return arg(format!("binary probability {p} outside [0,1]"));
            }
            probs.push(1.0 - p);
            probs.push(p);
        }
        Ok(MixedProfile { k: 2, probs })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 {
            return arg("profile needs at least one player and one action");
        }
        let mut probs = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return arg(format!("player {i} has {} entries, expected {k}", row.len()));
            }
            check_simplex(row).map_err(|e| Error::Argument(format!("player {i}: {e}")))?;
            probs.extend_from_slice(row);
        }
        Ok(MixedProfile { k, probs })
    }

    /// Point mass on `actions`.
    pub fn pure(actions: &[usize], k: usize) -> Result<Self> {
        check_pure(actions, actions.len(), k)?;
        let mut probs = vec![0.0; actions.len() * k];
        for (i, &a) in actions.iter().enumerate() {
            probs[i * k + a] = 1.0;
        }
        Ok(MixedProfile { k, probs })
    }

    pub fn players(&self) -> usize {
        self.probs.len() / self.k
    }

    pub fn actions(&self) -> usize {
        self.k
    }

    pub fn row(&self, player: usize) -> &[f64] {
        &self.probs[player * self.k..(player + 1) * self.k]
    }

    pub fn prob(&self, player: usize, action: usize) -> f64 {
        self.probs[player * self.k + action]
    }

    /// Probability of action 1 (binary games).
    pub fn binary(&self, player: usize) -> f64 {
        debug_assert_eq!(self.k, 2);
        self.probs[player * 2 + 1]
    }

    pub fn binary_vec(&self) -> Vec<f64> {
        (0..self.players()).map(|i| self.binary(i)).collect()
    }

    /// Sets the probability of action 1, clamped to `[0, 1]`.
    pub fn set_binary(&mut self, player: usize, p1: f64) {
        debug_assert_eq!(self.k, 2);
        let p1 = p1.clamp(0.0, 1.0);
        self.probs[player * 2] = 1.0 - p1;
        self.probs[player * 2 + 1] = p1;
    }

    pub fn set_row(&mut self, player: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.k {
            return arg("row length must equal k");
        }
        check_simplex(row)?;
        self.probs[player * self.k..(player + 1) * self.k].copy_from_slice(row);
        Ok(())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    /// `l1` distance between the two profiles restricted to players other than `skip`.
    pub fn l1_distance_excluding(&self, other: &MixedProfile, skip: usize) -> f64 {
        let k = self.k;
        self.probs
            .iter()
            .zip(&other.probs)
            .enumerate()
            .filter(|(idx, _)| idx / k != skip)
            .map(|(_, (a, b))| (a - b).abs())
            .sum()
    }

    pub fn validate_for(&self, n: usize, k: usize) -> Result<()> {
        if self.k != k || self.players() != n {
            return arg(format!(
                "profile is {}x{}, game is {n}x{k}",
                self.players(),
                self.k
            ));
        }
        Ok(())
    }
}

fn check_simplex(row: &[f64]) -> Result<()> {
    if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return arg("negative or non-finite probability");
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return arg(format!("probabilities sum to {s}"));
    }
    Ok(())
}

/// Table of `u_i(j, p_-i)` for every player `i` and action `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    k: usize,
    values: Vec<f64>,
}

impl PayoffTable {
    pub fn zeros(n: usize, k: usize) -> Self {
        PayoffTable { k, values: vec![0.0; n * k] }
    }

    pub(crate) fn from_flat(k: usize, values: Vec<f64>) -> Self {
        PayoffTable { k, values }
    }

    pub fn players(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn actions(&self) -> usize {
        self.k
    }

    pub fn get(&self, player: usize, action: usize) -> f64 {
        self.values[player * self.k + action]
    }

    pub fn row(&self, player: usize) -> &[f64] {
        &self.values[player * self.k..(player + 1) * self.k]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Best response of `player`, lowest index on ties.
    pub fn best_response(&self, player: usize) -> usize {
        best_response(self.row(player))
    }
}

/// Index of the maximal entry; the lowest index wins ties.
pub fn best_response(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Payoff vector `(u_i(a))_i`.
pub fn eval_pure<G: Game + ?Sized>(game: &G, profile: &PureProfile) -> Result<Vec<f64>> {
    profile.validate(game.players(), game.actions())?;
    Ok((0..game.players())
        .map(|i| game.payoff(i, profile.as_slice()))
        .collect())
}

/// `E_{a_-i ~ p_-i}[u_i(j, a_-i)]`.
pub fn expected_payoff<G: Game + ?Sized>(
    game: &G,
    profile: &MixedProfile,
    player: usize,
    action: usize,
) -> Result<f64> {
    profile.validate_for(game.players(), game.actions())?;
    if player >= game.players() || action >= game.actions() {
        return arg(format!("player {player} / action {action} out of range"));
    }
    let mut row = vec![0.0; game.actions()];
    game.expected_row(player, profile, &mut row)?;
    Ok(row[action])
}

/// Exact expected payoffs for every player and action.
pub fn expected_table<G: Game + ?Sized>(
    game: &G,
    profile: &MixedProfile,
    exec: Parallelism,
) -> Result<PayoffTable> {
    let (n, k) = (game.players(), game.actions());
    profile.validate_for(n, k)?;
    let rows = exec.map(n, |i| {
        let mut row = vec![0.0; k];
        game.expected_row(i, profile, &mut row).map(|_| row)
    });
    let mut values = Vec::with_capacity(n * k);
    for row in rows {
        values.extend(row?);
    }
    Ok(PayoffTable { k, values })
}

/// Expectation by enumerating the opponents' joint support.
///
/// Fails with [`Error::Capability`] when the joint support exceeds
/// [`ENUMERATION_LIMIT`] profiles.
pub fn enumerate_expected_row<G: Game + ?Sized>(
    game: &G,
    player: usize,
    profile: &MixedProfile,
    out: &mut [f64],
) -> Result<()> {
    let (n, k) = (game.players(), game.actions());
    profile.validate_for(n, k)?;
    if out.len() != k {
        return arg("output row must have k entries");
    }
    let supports: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|l| {
            if l == player {
                vec![(0, 1.0)]
            } else {
                profile
                    .row(l)
                    .iter()
                    .enumerate()
                    .filter(|(_, &q)| q > 0.0)
                    .map(|(a, &q)| (a, q))
                    .collect()
            }
        })
        .collect();
    let joint: u128 = supports.iter().map(|s| s.len() as u128).product();
    if joint > ENUMERATION_LIMIT {
        return Err(Error::Capability(format!(
            "joint opponent support of {joint} profiles exceeds enumeration limit"
        )));
    }
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut cursor = vec![0usize; n];
    let mut actions: Vec<usize> = supports.iter().map(|s| s[0].0).collect();
    loop {
        let weight: f64 = (0..n)
            .filter(|&l| l != player)
            .map(|l| supports[l][cursor[l]].1)
            .product();
        for (j, slot) in out.iter_mut().enumerate() {
            actions[player] = j;
            *slot += weight * game.payoff(player, &actions);
        }
        // odometer over opponents
        let mut l = 0;
        loop {
            if l == n {
                return Ok(());
            }
            if l != player {
                cursor[l] += 1;
                if cursor[l] < supports[l].len() {
                    actions[l] = supports[l][cursor[l]].0;
                    break;
                }
                cursor[l] = 0;
                actions[l] = supports[l][0].0;
            }
            l += 1;
        }
    }
}

/// Visits every pure profile of an `n`-player, `k`-action game in row-major
/// order (player 0 most significant).
pub fn for_each_profile(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut a = vec![0usize; n];
    loop {
        f(&a);
        let mut l = n;
        loop {
            if l == 0 {
                return;
            }
            l -= 1;
            a[l] += 1;
            if a[l] < k {
                break;
            }
            a[l] = 0;
        }
    }
}
