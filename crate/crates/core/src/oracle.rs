//! Query interfaces: the counted pure-profile oracle, the sampling estimator
//! for mixed profiles, and the exact mixed oracle used in testing mode.
//!
//! # Randomness
//!
//! Each sampling call is split into fixed-size batches. Batch `b` of call `t`
//! draws from its own ChaCha8 stream keyed by `(seed, t, b)`, so the estimate
//! depends only on the session seed and call sequence, never on how rayon
//! schedules the batches. Per-batch partial sums are reduced in batch order.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{arg, Result};
use crate::exec::Parallelism;
use crate::game::{expected_table, Game, MixedProfile, PayoffTable, PureProfile};

/// Samples per batch of a sampling call.
pub const BATCH_SIZE: u64 = 4096;

const PURE_STREAM: u64 = u64::MAX;

fn check_unit_open(x: f64, name: &str) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        arg(format!("{name} = {x} must lie in (0, 1)"))
    }
}

/// `ceil((64 / beta^3) ln(8n / delta))`.
pub fn binary_sample_count(n: usize, beta: f64, delta: f64) -> Result<u64> {
    kaction_sample_count_scaled(n, 1.0, beta, delta)
}

/// `ceil((64 k^2 / beta^3) ln(8n / delta))`.
pub fn kaction_sample_count(n: usize, k: usize, beta: f64, delta: f64) -> Result<u64> {
    kaction_sample_count_scaled(n, (k * k) as f64, beta, delta)
}

fn kaction_sample_count_scaled(n: usize, k2: f64, beta: f64, delta: f64) -> Result<u64> {
    check_unit_open(beta, "beta")?;
    check_unit_open(delta, "delta")?;
    if n == 0 {
        return arg("n must be positive");
    }
    let m = (64.0 * k2 / beta.powi(3)) * (8.0 * n as f64 / delta).ln();
    Ok(m.ceil() as u64)
}

/// `(1 - beta/2) p + (beta / 2k) 1`: every action keeps mass at least `beta / 2k`.
pub fn smoothed_profile(p: &MixedProfile, beta: f64) -> MixedProfile {
    let k = p.actions();
    let rows = (0..p.players())
        .map(|i| {
            p.row(i)
                .iter()
                .map(|&q| (1.0 - beta / 2.0) * q + beta / (2.0 * k as f64))
                .collect()
        })
        .collect();
    // convex combination of two simplex points stays on the simplex
    MixedProfile::from_rows(rows).expect("smoothing preserves the simplex")
}

/// Per-player, per-action payoff estimates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixedEstimate {
    pub table: PayoffTable,
    /// Number of samples in which player `i` played action `j` (flat `n * k`).
    pub counts: Vec<u64>,
    pub samples: u64,
    pub beta: f64,
    pub delta: f64,
    /// The profile the queries were actually drawn from.
    pub sampled_from: MixedProfile,
}

impl MixedEstimate {
    pub fn get(&self, player: usize, action: usize) -> f64 {
        self.table.get(player, action)
    }
}

/// How algorithms obtain mixed payoffs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    /// Exact expectations through the mixed oracle.
    Exact,
    /// Sampling with accuracy `beta` and failure probability `delta`.
    Sampled { beta: f64, delta: f64 },
}

#[derive(Serialize)]
struct TraceLine<'a> {
    t: u64,
    profile: &'a [usize],
    payoffs: &'a [f64],
}

struct Batch {
    sums: Vec<f64>,
    counts: Vec<u64>,
    records: Vec<(Vec<usize>, Vec<f64>)>,
}

/// Query-counting access to a game.
pub struct OracleSession<'g> {
    game: &'g dyn Game,
    seed: u64,
    pure_queries: u64,
    qm_calls: u64,
    sampling_calls: u64,
    uncoupled: bool,
    exec: Parallelism,
    rng: ChaCha8Rng,
    trace: Option<Box<dyn Write + Send + 'g>>,
}

impl<'g> OracleSession<'g> {
    pub fn new(game: &'g dyn Game, seed: u64) -> Self {
        OracleSession {
            game,
            seed,
            pure_queries: 0,
            qm_calls: 0,
            sampling_calls: 0,
            uncoupled: false,
            exec: Parallelism::default(),
            rng: stream(seed, PURE_STREAM, 0),
            trace: None,
        }
    }

    /// Restricts pure queries to [`OracleSession::query_own`].
    pub fn uncoupled(mut self, on: bool) -> Self {
        self.uncoupled = on;
        self
    }

    pub fn with_parallelism(mut self, exec: Parallelism) -> Self {
        self.exec = exec;
        self
    }

    /// Writes one JSON line `{t, profile, payoffs}` per pure query.
    pub fn with_trace(mut self, sink: Box<dyn Write + Send + 'g>) -> Self {
        self.trace = Some(sink);
        self
    }

    pub fn game(&self) -> &'g dyn Game {
        self.game
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pure_queries(&self) -> u64 {
        self.pure_queries
    }

    pub fn qm_calls(&self) -> u64 {
        self.qm_calls
    }

    pub fn parallelism(&self) -> Parallelism {
        self.exec
    }

    fn write_trace(&mut self, t: u64, profile: &[usize], payoffs: &[f64]) -> Result<()> {
        if let Some(sink) = self.trace.as_mut() {
            serde_json::to_writer(&mut *sink, &TraceLine { t, profile, payoffs })?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }

    /// One pure query returning every player's payoff.
    pub fn query_pure(&mut self, profile: &PureProfile) -> Result<Vec<f64>> {
        if self.uncoupled {
            return arg("session is uncoupled: use query_own");
        }
        profile.validate(self.game.players(), self.game.actions())?;
        let a = profile.as_slice();
        let payoffs: Vec<f64> = (0..self.game.players())
            .map(|i| self.game.sample_payoff(i, a, &mut self.rng))
            .collect();
        let t = self.pure_queries;
        self.pure_queries += 1;
        self.write_trace(t, a, &payoffs)?;
        Ok(payoffs)
    }

    /// One pure query in which only `player` learns a payoff.
    pub fn query_own(&mut self, player: usize, profile: &PureProfile) -> Result<f64> {
        profile.validate(self.game.players(), self.game.actions())?;
        if player >= self.game.players() {
            return arg(format!("player {player} out of range"));
        }
        let v = self.game.sample_payoff(player, profile.as_slice(), &mut self.rng);
        let t = self.pure_queries;
        self.pure_queries += 1;
        self.write_trace(t, profile.as_slice(), &[v])?;
        Ok(v)
    }

    /// Exact `u_i(j, p_-i)` for all `i, j`. Counted separately from pure queries.
    pub fn exact_mixed(&mut self, p: &MixedProfile) -> Result<PayoffTable> {
        let table = expected_table(self.game, p, self.exec)?;
        self.qm_calls += 1;
        Ok(table)
    }

    /// Binary sampling estimator with `ceil((64/beta^3) ln(8n/delta))` queries.
    pub fn sample_mixed_binary(&mut self, p: &MixedProfile, beta: f64, delta: f64) -> Result<MixedEstimate> {
        if self.game.actions() != 2 {
            return arg("binary sampling oracle needs a two-action game");
        }
        let m = binary_sample_count(self.game.players(), beta, delta)?;
        self.sample_mixed_with(p, beta, delta, m)
    }

    /// k-action sampling estimator with `ceil((64k^2/beta^3) ln(8n/delta))` queries.
    pub fn sample_mixed_kaction(&mut self, p: &MixedProfile, beta: f64, delta: f64) -> Result<MixedEstimate> {
        let k = self.game.actions();
        if k < 2 {
            return arg("sampling oracle needs k >= 2");
        }
        let m = kaction_sample_count(self.game.players(), k, beta, delta)?;
        self.sample_mixed_with(p, beta, delta, m)
    }

    /// Binary formula for two-action games, k-action formula otherwise.
    pub fn sample_mixed(&mut self, p: &MixedProfile, beta: f64, delta: f64) -> Result<MixedEstimate> {
        if self.game.actions() == 2 {
            self.sample_mixed_binary(p, beta, delta)
        } else {
            self.sample_mixed_kaction(p, beta, delta)
        }
    }

    /// Mixed payoffs through either estimator.
    pub fn observe(&mut self, p: &MixedProfile, estimator: Estimator) -> Result<PayoffTable> {
        match estimator {
            Estimator::Exact => self.exact_mixed(p),
            Estimator::Sampled { beta, delta } => Ok(self.sample_mixed(p, beta, delta)?.table),
        }
    }

    fn sample_mixed_with(&mut self, p: &MixedProfile, beta: f64, delta: f64, m: u64) -> Result<MixedEstimate> {
        let (n, k) = (self.game.players(), self.game.actions());
        p.validate_for(n, k)?;
        let smoothed = smoothed_profile(p, beta);
        let cdf: Vec<f64> = (0..n)
            .flat_map(|i| {
                smoothed.row(i).iter().scan(0.0, |acc, &q| {
                    *acc += q;
                    Some(*acc)
                })
            })
            .collect();
        let call = self.sampling_calls;
        self.sampling_calls += 1;
        let record = self.trace.is_some();
        let batches = m.div_ceil(BATCH_SIZE) as usize;
        let game = self.game;
        let seed = self.seed;
        let outs: Vec<Batch> = self.exec.map(batches, |b| {
            let count = BATCH_SIZE.min(m - b as u64 * BATCH_SIZE);
            let mut rng = stream(seed, call, b as u64);
            sample_batch(game, &cdf, n, k, count, &mut rng, record)
        });
        let mut sums = vec![0.0; n * k];
        let mut counts = vec![0u64; n * k];
        let mut records = Vec::new();
        for out in outs {
            for (s, x) in sums.iter_mut().zip(&out.sums) {
                *s += x;
            }
            for (c, x) in counts.iter_mut().zip(&out.counts) {
                *c += x;
            }
            records.extend(out.records);
        }
        for (profile, payoffs) in records {
            let t = self.pure_queries;
            self.pure_queries += 1;
            self.write_trace(t, &profile, &payoffs)?;
        }
        if !record {
            self.pure_queries += m;
        }
        let values = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();
        Ok(MixedEstimate {
            table: PayoffTable::from_flat(k, values),
            counts,
            samples: m,
            beta,
            delta,
            sampled_from: smoothed,
        })
    }
}

fn sample_batch(
    game: &dyn Game,
    cdf: &[f64],
    n: usize,
    k: usize,
    count: u64,
    rng: &mut ChaCha8Rng,
    record: bool,
) -> Batch {
    let mut sums = vec![0.0; n * k];
    let mut counts = vec![0u64; n * k];
    let mut records = Vec::new();
    let mut a = vec![0usize; n];
    let mut payoffs = vec![0.0; n];
    for _ in 0..count {
        for (i, slot) in a.iter_mut().enumerate() {
            let u: f64 = rng.random();
            let row = &cdf[i * k..(i + 1) * k];
            *slot = row.iter().position(|&c| u < c).unwrap_or(k - 1);
        }
        for i in 0..n {
            let v = game.sample_payoff(i, &a, rng);
            payoffs[i] = v;
            sums[i * k + a[i]] += v;
            counts[i * k + a[i]] += 1;
        }
        if record {
            records.push((a.clone(), payoffs.clone()));
        }
    }
    Batch { sums, counts, records }
}

fn stream(seed: u64, call: u64, batch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&call.to_le_bytes());
    key[16..24].copy_from_slice(&batch.to_le_bytes());
    key[24..].copy_from_slice(b"lgl-orcl");
    ChaCha8Rng::from_seed(key)
}

/// Payoff distributions over `[0, 1]` for [`StochasticGame`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PayoffDistribution {
    /// Bernoulli with the base payoff as mean.
    #[default]
    Bernoulli,
}

/// Wraps a game so that each query returns a random payoff whose mean is the
/// base game's payoff.
#[derive(Clone, Debug)]
pub struct StochasticGame<G> {
    base: G,
    dist: PayoffDistribution,
}

impl<G: Game> StochasticGame<G> {
    pub fn new(base: G) -> Self {
        StochasticGame { base, dist: PayoffDistribution::Bernoulli }
    }

    pub fn base(&self) -> &G {
        &self.base
    }
}

impl<G: Game> Game for StochasticGame<G> {
    fn players(&self) -> usize {
        self.base.players()
    }
    fn actions(&self) -> usize {
        self.base.actions()
    }
    fn largeness(&self) -> f64 {
        self.base.largeness()
    }
    fn payoff(&self, player: usize, profile: &[usize]) -> f64 {
        self.base.payoff(player, profile)
    }
    fn sample_payoff(&self, player: usize, profile: &[usize], rng: &mut dyn RngCore) -> f64 {
        let mean = self.base.payoff(player, profile);
        match self.dist {
            PayoffDistribution::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
    fn is_stochastic(&self) -> bool {
        true
    }
    fn has_fast_expectation(&self) -> bool {
        self.base.has_fast_expectation()
    }
    fn expected_row(&self, player: usize, profile: &MixedProfile, out: &mut [f64]) -> Result<()> {
        self.base.expected_row(player, profile, out)
    }
}
