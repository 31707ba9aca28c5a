//! Block-update dynamic for k-action games, and the truncated-triangle left
//! sums that bound its regret.
//!
//! Each player's mixed strategy is split into `N` blocks of mass `1/N`. In
//! round `t` every player observes expected payoffs at the current profile and
//! moves block `t` onto her best response.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::binary::OracleMode;
use crate::error::{arg, Result};
use crate::exec::Parallelism;
use crate::game::{expected_table, Game, MixedProfile};
use crate::oracle::OracleSession;
use crate::report::RunReport;

/// Slack on the per-block ceiling check.
pub const CEILING_TOL: f64 = 1e-9;

/// Action assigned to each block of each player.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockAllocation {
    n: usize,
    k: usize,
    blocks: usize,
    /// Flat `n * blocks`, player-major.
    assign: Vec<usize>,
}

impl BlockAllocation {
    /// Every block on action 0.
    pub fn new(n: usize, k: usize, blocks: usize) -> Result<Self> {
        if n == 0 || k < 2 || blocks == 0 {
            return arg("block allocation needs n >= 1, k >= 2 and at least one block");
        }
        Ok(BlockAllocation { n, k, blocks, assign: vec![0; n * blocks] })
    }

    /// Uniformly random initial actions, for stress tests.
    pub fn random(n: usize, k: usize, blocks: usize, seed: u64) -> Result<Self> {
        let mut a = Self::new(n, k, blocks)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in &mut a.assign {
            *x = rng.random_range(0..k);
        }
        Ok(a)
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn actions(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Action holding block `t` (0-based) of `player`.
    pub fn action(&self, player: usize, t: usize) -> usize {
        self.assign[player * self.blocks + t]
    }

    pub fn set(&mut self, player: usize, t: usize, action: usize) {
        debug_assert!(action < self.k);
        self.assign[player * self.blocks + t] = action;
    }

    pub fn counts(&self, player: usize) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &a in &self.assign[player * self.blocks..(player + 1) * self.blocks] {
            c[a] += 1;
        }
        c
    }

    /// Per-action block counts divided by `N`.
    pub fn induced_profile(&self) -> MixedProfile {
        let rows = (0..self.n)
            .map(|i| self.counts(i).into_iter().map(|c| c as f64 / self.blocks as f64).collect())
            .collect();
        MixedProfile::from_rows(rows).expect("block counts always sum to N")
    }

    fn hash_into(&self, h: &mut Sha256) {
        for &a in &self.assign {
            h.update((a as u32).to_le_bytes());
        }
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        self.hash_into(&mut h);
        hex::encode(h.finalize())
    }
}

/// `min(1, 2c (N - t + 1) / N)` for 1-based round `t`.
pub fn block_ceiling(c: f64, blocks: usize, t: usize) -> f64 {
    let n = blocks as f64;
    (2.0 * c * (n - t as f64 + 1.0) / n).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuParams {
    pub blocks: usize,
    /// Sampling accuracy; only used with a sampled oracle.
    pub alpha: f64,
    /// Total failure probability, split over the `N` rounds.
    pub eta: f64,
}

impl BuParams {
    pub fn new(blocks: usize, alpha: f64, eta: f64) -> Result<Self> {
        if blocks == 0 {
            return arg("need at least one block");
        }
        if !(alpha > 0.0 && alpha < 1.0) || !(eta > 0.0 && eta < 1.0) {
            return arg("alpha and eta must lie in (0, 1)");
        }
        Ok(BuParams { blocks, alpha, eta })
    }

    pub fn exact(blocks: usize) -> Result<Self> {
        Self::new(blocks, 0.05, 0.1)
    }
}

#[derive(Clone, Debug)]
pub struct BuRun {
    pub profile: MixedProfile,
    pub report: RunReport,
    pub allocation: BlockAllocation,
    /// Chained digest after each round.
    pub round_digests: Vec<String>,
}

pub fn bu(session: &mut OracleSession<'_>, params: BuParams, mode: OracleMode) -> Result<BuRun> {
    let game = session.game();
    let alloc = BlockAllocation::new(game.players(), game.actions(), params.blocks)?;
    bu_from(session, params, mode, alloc)
}

/// Block update from a given initial allocation.
pub fn bu_from(
    session: &mut OracleSession<'_>,
    params: BuParams,
    mode: OracleMode,
    mut alloc: BlockAllocation,
) -> Result<BuRun> {
    let game = session.game();
    let (n, k) = (game.players(), game.actions());
    if alloc.players() != n || alloc.actions() != k || alloc.blocks() != params.blocks {
        return arg("allocation does not match game and block count");
    }
    let est = mode.estimator(params.alpha, params.eta / params.blocks as f64);
    let mut chain = [0u8; 32];
    let mut round_digests = Vec::with_capacity(params.blocks);
    for t in 0..params.blocks {
        let v = session.observe(&alloc.induced_profile(), est)?;
        for i in 0..n {
            alloc.set(i, t, v.best_response(i));
        }
        let mut h = Sha256::new();
        h.update(chain);
        alloc.hash_into(&mut h);
        chain = h.finalize().into();
        round_digests.push(hex::encode(chain));
    }
    let profile = alloc.induced_profile();
    let c = game.largeness();
    let sampled = !mode.is_exact();
    let bound = bu_bound(c, k, Some(params.blocks), if sampled { params.alpha } else { 0.0 })?;
    let mut report = RunReport::finish(
        "bu",
        json!({
            "blocks": params.blocks,
            "alpha": params.alpha,
            "eta": params.eta,
            "bound": bound.epsilon,
            "bound_case": bound.case,
            "oracle": crate::binary::estimator_json(est),
        }),
        session,
        params.blocks as u64,
        &profile,
    )?;
    report.k = Some(k);
    report.blocks = Some(params.blocks);
    report.allocation_digest = round_digests.last().cloned();
    Ok(BuRun { profile, report, allocation: alloc, round_digests })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeilingViolation {
    pub player: usize,
    /// 1-based round.
    pub block: usize,
    pub gap: f64,
    pub ceiling: f64,
}

/// Blocks whose action's final optimality gap exceeds the ceiling of the
/// round in which they were placed.
pub fn ceiling_violations<G: Game + ?Sized>(
    game: &G,
    alloc: &BlockAllocation,
    exec: Parallelism,
) -> Result<Vec<CeilingViolation>> {
    let table = expected_table(game, &alloc.induced_profile(), exec)?;
    let c = game.largeness();
    let mut out = Vec::new();
    for i in 0..alloc.players() {
        let row = table.row(i);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for t in 0..alloc.blocks() {
            let gap = best - row[alloc.action(i, t)];
            let ceiling = block_ceiling(c, alloc.blocks(), t + 1);
            if gap > ceiling + CEILING_TOL {
                out.push(CeilingViolation { player: i, block: t + 1, gap, ceiling });
            }
        }
    }
    Ok(out)
}

/// Region under `y = h x` on `[0, b]`, capped at `y = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedTriangle {
    pub b: f64,
    pub h: f64,
}

impl TruncatedTriangle {
    pub fn new(b: f64, h: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite() && h > 0.0 && h.is_finite()) {
            return arg("triangle needs positive finite base and slope");
        }
        Ok(TruncatedTriangle { b, h })
    }

    pub fn height(&self, x: f64) -> f64 {
        (self.h * x).min(1.0)
    }

    pub fn is_truncated(&self) -> bool {
        self.b * self.h > 1.0
    }
}

/// Sorted points in `[0, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePartition(Vec<f64>);

impl BasePartition {
    pub fn new(points: Vec<f64>, b: f64) -> Result<Self> {
        if points.iter().any(|&x| !(0.0..=b).contains(&x)) {
            return arg(format!("partition points must lie in [0, {b}]"));
        }
        if points.windows(2).any(|w| w[0] > w[1]) {
            return arg("partition points must be sorted");
        }
        Ok(BasePartition(points))
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }
}

/// `sum_i min(h x_i, 1) (x_{i+1} - x_i)` with `x_{r+1} = b`.
pub fn left_sum(tri: &TruncatedTriangle, part: &BasePartition) -> f64 {
    let xs = part.points();
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let next = xs.get(i + 1).copied().unwrap_or(tri.b);
            tri.height(x) * (next - x)
        })
        .sum()
}

/// Largest left sum over partitions with `k` points, and a partition attaining it.
pub fn max_left_sum(tri: &TruncatedTriangle, k: usize) -> Result<(f64, BasePartition)> {
    if k == 0 {
        return arg("k must be at least 1");
    }
    let (b, h) = (tri.b, tri.h);
    let kf = k as f64;
    if h * b * kf / (kf + 1.0) <= 1.0 {
        let pts = (1..=k).map(|i| i as f64 * b / (kf + 1.0)).collect();
        Ok((h * b * b / 2.0 * kf / (kf + 1.0), BasePartition::new(pts, b)?))
    } else {
        // the last point sits where the cap starts; the rest split [0, 1/h] evenly
        let mut pts: Vec<f64> = (1..k).map(|i| i as f64 / (h * kf)).collect();
        pts.push(1.0 / h);
        Ok((b - 1.0 / (2.0 * h) - 1.0 / (2.0 * h * kf), BasePartition::new(pts, b)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub epsilon: f64,
    pub case: BoundCase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCase {
    /// `c <= 1/2`.
    SmallC,
    /// `c > 1/2` and the triangle over the non-best actions is not truncated.
    Untruncated,
    /// `c > 1/2` and the cap is active.
    Truncated,
}

impl BoundCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundCase::SmallC => "small_c",
            BoundCase::Untruncated => "untruncated",
            BoundCase::Truncated => "truncated",
        }
    }
}

fn check_bound_args(c: f64, blocks: Option<usize>, alpha: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return arg(format!("c = {c} must be positive"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return arg(format!("alpha = {alpha} must be nonnegative"));
    }
    match blocks {
        Some(0) => arg("N must be at least 1"),
        Some(n) => Ok(1.0 / n as f64),
        None => Ok(0.0),
    }
}

/// Worst-case regret of the block update. `blocks = None` is the `N -> inf` limit.
pub fn bu_bound(c: f64, k: usize, blocks: Option<usize>, alpha: f64) -> Result<BoundValue> {
    let inv_n = check_bound_args(c, blocks, alpha)?;
    if k < 2 {
        return arg("k must be at least 2");
    }
    let inflate = 1.0 + inv_n + alpha / (2.0 * c);
    let frac = (k - 1) as f64 / k as f64;
    let (base, case) = if c <= 0.5 {
        (c * frac, BoundCase::SmallC)
    } else if frac <= 1.0 / (2.0 * c) {
        (c * frac, BoundCase::Untruncated)
    } else {
        (1.0 - 1.0 / (4.0 * c) - 1.0 / (4.0 * c * (k - 1) as f64), BoundCase::Truncated)
    };
    Ok(BoundValue { epsilon: base * inflate, case })
}

/// The k-independent bound: `c (1 + 1/N)` for `c <= 1/2`, else `1 - 1/(4c) + 1/(2N)`.
pub fn bu_first_bound(c: f64, blocks: Option<usize>) -> Result<BoundValue> {
    let inv_n = check_bound_args(c, blocks, 0.0)?;
    Ok(if c <= 0.5 {
        BoundValue { epsilon: c * (1.0 + inv_n), case: BoundCase::SmallC }
    } else {
        BoundValue { epsilon: 1.0 - 1.0 / (4.0 * c) + inv_n / 2.0, case: BoundCase::Truncated }
    })
}

/// Assigns each block the largest regret value its ceiling allows.
/// `regrets` must be sorted ascending; `None` marks a block no value fits.
pub fn greedy_allotment(ceilings: &[f64], regrets: &[f64]) -> Vec<Option<usize>> {
    ceilings
        .iter()
        .map(|&cap| regrets.iter().rposition(|&r| r <= cap))
        .collect()
}

/// `(1/N) sum_t R_{a(t)}` over assigned blocks.
pub fn allotment_regret(allotment: &[Option<usize>], regrets: &[f64]) -> f64 {
    let total: f64 = allotment.iter().flatten().map(|&j| regrets[j]).sum();
    total / allotment.len().max(1) as f64
}
