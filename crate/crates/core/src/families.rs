//! Seeded generators of large games.
//!
//! Every generator is a pure function of its parameters and seed. Families
//! with multilinear structure override [`Game::expected_row`] with a closed
//! form so that exact mixed payoffs stay cheap at large `n`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::game::{Game, MixedProfile};

/// Largest `k^n` accepted by [`gen_tiny_tensor`].
pub const TINY_LIMIT: u128 = 4096;
/// Largest `k^n` accepted for explicit tensors read from disk.
pub const EXPLICIT_LIMIT: u128 = 1 << 20;

fn check_unit(x: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        arg(format!("{what} = {x} outside [0,1]"))
    }
}

/// Cross-player weight layout for [`LinearInfluenceGame`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightTemplate {
    /// Weights drawn uniformly from `[0, 1]`.
    #[default]
    Uniform,
    /// `w_ij(a_i, a_j) = 1` iff `a_i == a_j` when `i < j`, iff `a_i != a_j` when `i > j`.
    MatchingPennies,
}

/// `u_i(a) = (1 - mu) base_i(a_i) + mu / (n - 1) * sum_{j != i} w_ij(a_i, a_j)`
/// with `mu = min(1, c (n - 1) / n)`, which makes the game `c/n`-large.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearInfluenceGame {
    n: usize,
    k: usize,
    c: f64,
    mu: f64,
    base: Vec<f64>,
    weights: Vec<f64>,
}

impl LinearInfluenceGame {
    pub fn mixing(&self) -> f64 {
        self.mu
    }

    pub fn base(&self, player: usize, action: usize) -> f64 {
        self.base[player * self.k + action]
    }
}

pub fn gen_linear_influence(n: usize, k: usize, c: f64, seed: u64) -> Result<LinearInfluenceGame> {
    gen_linear_influence_with(n, k, c, WeightTemplate::Uniform, seed)
}

pub fn gen_linear_influence_with(
    n: usize,
    k: usize,
    c: f64,
    template: WeightTemplate,
    seed: u64,
) -> Result<LinearInfluenceGame> {
    if n < 2 || k < 2 {
        return arg("linear-influence games need n >= 2 and k >= 2");
    }
    if !(0.0..=n as f64).contains(&c) {
        return arg(format!("c = {c} outside [0, n]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..n * k).map(|_| rng.random::<f64>()).collect();
    let mut weights = vec![0.0; n * n * k * k];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            for ai in 0..k {
                for aj in 0..k {
                    let idx = ((i * n + j) * k + ai) * k + aj;
                    weights[idx] = match template {
                        WeightTemplate::Uniform => rng.random::<f64>(),
                        WeightTemplate::MatchingPennies => {
                            let matched = ai == aj;
                            if matched != (i > j) {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                }
            }
        }
    }
    let mu = (c * (n - 1) as f64 / n as f64).min(1.0);
    Ok(LinearInfluenceGame { n, k, c, mu, base, weights })
}

impl Game for LinearInfluenceGame {
    fn players(&self) -> usize {
        self.n
    }
    fn actions(&self) -> usize {
        self.k
    }
    fn largeness(&self) -> f64 {
        self.c
    }

    fn payoff(&self, i: usize, a: &[usize]) -> f64 {
        let (ai, kk) = (a[i], self.k * self.k);
        // own-player weights are zero, so the diagonal adds nothing
        let cross: f64 = self.weights[i * self.n * kk..(i + 1) * self.n * kk]
            .chunks_exact(kk)
            .zip(a)
            .map(|(w, &aj)| w[ai * self.k + aj])
            .sum();
        (1.0 - self.mu) * self.base(i, ai) + self.mu * cross / (self.n - 1) as f64
    }

    fn has_fast_expectation(&self) -> bool {
        true
    }

    fn expected_row(&self, i: usize, p: &MixedProfile, out: &mut [f64]) -> Result<()> {
        p.validate_for(self.n, self.k)?;
        let scale = self.mu / (self.n - 1) as f64;
        for (aj_i, slot) in out.iter_mut().enumerate() {
            let mut cross = 0.0;
            for j in (0..self.n).filter(|&j| j != i) {
                let start = ((i * self.n + j) * self.k + aj_i) * self.k;
                let w = &self.weights[start..start + self.k];
                cross += w.iter().zip(p.row(j)).map(|(w, q)| w * q).sum::<f64>();
            }
            *slot = (1.0 - self.mu) * self.base(i, aj_i) + scale * cross;
        }
        Ok(())
    }
}

/// Every player is paid `value` regardless of the profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantGame {
    n: usize,
    k: usize,
    value: f64,
}

impl ConstantGame {
    pub fn new(n: usize, k: usize, value: f64) -> Result<Self> {
        check_unit(value, "constant payoff")?;
        if n == 0 || k == 0 {
            return arg("empty game");
        }
        Ok(ConstantGame { n, k, value })
    }
}

impl Game for ConstantGame {
    fn players(&self) -> usize {
        self.n
    }
    fn actions(&self) -> usize {
        self.k
    }
    fn largeness(&self) -> f64 {
        1.0
    }
    fn payoff(&self, _: usize, _: &[usize]) -> f64 {
        self.value
    }
    fn has_fast_expectation(&self) -> bool {
        true
    }
    fn expected_row(&self, _: usize, _: &MixedProfile, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|x| *x = self.value);
        Ok(())
    }
}

/// `u_i(a) = values[i][a_i]`: no cross-player influence at all.
#[derive(Clone, Debug, PartialEq)]
pub struct IndependentGame {
    k: usize,
    values: Vec<Vec<f64>>,
    c: f64,
}

impl IndependentGame {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let k = values.first().map_or(0, Vec::len);
        if k == 0 || values.iter().any(|r| r.len() != k) {
            return arg("independent game needs equal-length, nonempty payoff rows");
        }
        for v in values.iter().flatten() {
            check_unit(*v, "payoff")?;
        }
        Ok(IndependentGame { k, values, c: 1.0 })
    }

    /// All `n` players share the per-action payoffs `values`.
    pub fn symmetric(n: usize, values: Vec<f64>) -> Result<Self> {
        IndependentGame::new(vec![values; n])
    }

    /// Overrides the declared largeness numerator (default 1). Any `c >= 0`
    /// is a true declaration for this family.
    pub fn with_largeness(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

impl Game for IndependentGame {
    fn players(&self) -> usize {
        self.values.len()
    }
    fn actions(&self) -> usize {
        self.k
    }
    fn largeness(&self) -> f64 {
        self.c
    }
    fn payoff(&self, i: usize, a: &[usize]) -> f64 {
        self.values[i][a[i]]
    }
    fn has_fast_expectation(&self) -> bool {
        true
    }
    fn expected_row(&self, i: usize, _: &MixedProfile, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.values[i]);
        Ok(())
    }
}

/// The stochastic family `G_b`: action `b_i` pays Bernoulli((l-1)/l), the
/// other action Bernoulli(1/l), independently of everyone else.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundGame {
    bits: Vec<usize>,
    ell: f64,
}

impl LowerBoundGame {
    pub fn new(bits: Vec<usize>, ell: f64) -> Result<Self> {
        if !(ell > 2.0) {
            return arg(format!("ell = {ell} must exceed 2"));
        }
        if bits.iter().any(|&b| b > 1) {
            return arg("bits must be 0 or 1");
        }
        Ok(LowerBoundGame { bits, ell })
    }

    pub fn bits(&self) -> &[usize] {
        &self.bits
    }

    pub fn high_mean(&self) -> f64 {
        (self.ell - 1.0) / self.ell
    }

    pub fn low_mean(&self) -> f64 {
        1.0 / self.ell
    }

    fn mean(&self, i: usize, action: usize) -> f64 {
        if action == self.bits[i] {
            self.high_mean()
        } else {
            self.low_mean()
        }
    }
}

pub fn gen_lower_bound(n: usize, ell: f64, seed: u64) -> Result<LowerBoundGame> {
    if n == 0 {
        return arg("n must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = (0..n).map(|_| rng.random_range(0..2usize)).collect();
    LowerBoundGame::new(bits, ell)
}

impl Game for LowerBoundGame {
    fn players(&self) -> usize {
        self.bits.len()
    }
    fn actions(&self) -> usize {
        2
    }
    fn largeness(&self) -> f64 {
        1.0
    }
    fn payoff(&self, i: usize, a: &[usize]) -> f64 {
        self.mean(i, a[i])
    }
    fn sample_payoff(&self, i: usize, a: &[usize], rng: &mut dyn RngCore) -> f64 {
        if rng.random::<f64>() < self.mean(i, a[i]) {
            1.0
        } else {
            0.0
        }
    }
    fn is_stochastic(&self) -> bool {
        true
    }
    fn has_fast_expectation(&self) -> bool {
        true
    }
    fn expected_row(&self, i: usize, _: &MixedProfile, out: &mut [f64]) -> Result<()> {
        out[0] = self.mean(i, 0);
        out[1] = self.mean(i, 1);
        Ok(())
    }
}

/// Explicit payoff tensor. `payoffs[i * k^n + idx(a)]` with `idx` row-major
/// over players (player 0 most significant).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExplicitRepr", into = "ExplicitRepr")]
pub struct ExplicitGame {
    n: usize,
    k: usize,
    c: f64,
    payoffs: Vec<f64>,
    // k^n
    stride: usize,
}

#[derive(Serialize, Deserialize)]
struct ExplicitRepr {
    n: usize,
    k: usize,
    c: f64,
    payoffs: Vec<f64>,
}

impl TryFrom<ExplicitRepr> for ExplicitGame {
    type Error = Error;
    fn try_from(r: ExplicitRepr) -> Result<Self> {
        ExplicitGame::new(r.n, r.k, r.c, r.payoffs)
    }
}

impl From<ExplicitGame> for ExplicitRepr {
    fn from(g: ExplicitGame) -> Self {
        ExplicitRepr { n: g.n, k: g.k, c: g.c, payoffs: g.payoffs }
    }
}

impl ExplicitGame {
    pub fn new(n: usize, k: usize, c: f64, payoffs: Vec<f64>) -> Result<Self> {
        if n == 0 || k == 0 {
            return arg("empty game");
        }
        let profiles = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if profiles > EXPLICIT_LIMIT {
            return arg(format!("explicit tensor with {profiles} profiles is too large"));
        }
        let stride = profiles as usize;
        if payoffs.len() != n * stride {
            return arg(format!("expected {} payoffs, got {}", n * stride, payoffs.len()));
        }
        for v in &payoffs {
            check_unit(*v, "payoff")?;
        }
        if !(c >= 0.0) {
            return arg("largeness numerator must be nonnegative");
        }
        Ok(ExplicitGame { n, k, c, payoffs, stride })
    }

    fn index(&self, a: &[usize]) -> usize {
        a.iter().fold(0, |acc, &x| acc * self.k + x)
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.payoffs
    }
}

impl Game for ExplicitGame {
    fn players(&self) -> usize {
        self.n
    }
    fn actions(&self) -> usize {
        self.k
    }
    fn largeness(&self) -> f64 {
        self.c
    }
    fn payoff(&self, i: usize, a: &[usize]) -> f64 {
        self.payoffs[i * self.stride + self.index(a)]
    }
}

/// Copies any small game into an explicit tensor.
pub fn materialize<G: Game + ?Sized>(game: &G) -> Result<ExplicitGame> {
    let (n, k) = (game.players(), game.actions());
    let profiles = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if profiles > EXPLICIT_LIMIT {
        return Err(Error::Capability(format!("cannot materialise {profiles} profiles")));
    }
    let stride = profiles as usize;
    let mut payoffs = vec![0.0; n * stride];
    let mut idx = 0;
    crate::game::for_each_profile(n, k, |a| {
        for i in 0..n {
            payoffs[i * stride + idx] = game.payoff(i, a);
        }
        idx += 1;
    });
    ExplicitGame::new(n, k, game.largeness(), payoffs)
}

/// Uniform random tensor squeezed into `[1/2 - gamma/2, 1/2 + gamma/2]`, so
/// that no unilateral change moves any payoff by more than `gamma`.
pub fn gen_tiny_tensor(n: usize, k: usize, gamma: f64, seed: u64) -> Result<ExplicitGame> {
    if n == 0 || k == 0 {
        return arg("empty game");
    }
    check_unit(gamma, "gamma")?;
    let profiles = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if profiles > TINY_LIMIT {
        return arg(format!("tiny tensor limited to {TINY_LIMIT} profiles, got {profiles}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payoffs = (0..n * profiles as usize)
        .map(|_| 0.5 - gamma / 2.0 + gamma * rng.random::<f64>())
        .collect();
    ExplicitGame::new(n, k, gamma * n as f64, payoffs)
}

/// Generator name and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum FamilySpec {
    LinearInfluence {
        n: usize,
        #[serde(default = "two")]
        k: usize,
        c: f64,
        #[serde(default)]
        template: WeightTemplate,
    },
    LowerBound {
        n: usize,
        ell: f64,
    },
    TinyTensor {
        n: usize,
        k: usize,
        gamma: f64,
    },
    Independent {
        n: usize,
        values: Vec<f64>,
        #[serde(default = "one")]
        c: f64,
    },
    Constant {
        n: usize,
        #[serde(default = "two")]
        k: usize,
        value: f64,
    },
}

fn two() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::LinearInfluence { .. } => "linear_influence",
            FamilySpec::LowerBound { .. } => "lower_bound",
            FamilySpec::TinyTensor { .. } => "tiny_tensor",
            FamilySpec::Independent { .. } => "independent",
            FamilySpec::Constant { .. } => "constant",
        }
    }

    pub fn players(&self) -> usize {
        match *self {
            FamilySpec::LinearInfluence { n, .. }
            | FamilySpec::LowerBound { n, .. }
            | FamilySpec::TinyTensor { n, .. }
            | FamilySpec::Independent { n, .. }
            | FamilySpec::Constant { n, .. } => n,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn Game>> {
        Ok(match self {
            FamilySpec::LinearInfluence { n, k, c, template } => {
                Box::new(gen_linear_influence_with(*n, *k, *c, *template, seed)?)
            }
            FamilySpec::LowerBound { n, ell } => Box::new(gen_lower_bound(*n, *ell, seed)?),
            FamilySpec::TinyTensor { n, k, gamma } => Box::new(gen_tiny_tensor(*n, *k, *gamma, seed)?),
            FamilySpec::Independent { n, values, c } => {
                Box::new(IndependentGame::symmetric(*n, values.clone())?.with_largeness(*c))
            }
            FamilySpec::Constant { n, k, value } => Box::new(ConstantGame::new(*n, *k, *value)?),
        })
    }
}

/// `{family, params, seed}`: rebuilds the identical game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    #[serde(flatten)]
    pub spec: FamilySpec,
    pub seed: u64,
}

impl FamilyDescriptor {
    pub fn build(&self) -> Result<Box<dyn Game>> {
        self.spec.build(self.seed)
    }
}

/// A game file: either a family descriptor or an explicit tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GameFile {
    Descriptor(FamilyDescriptor),
    Explicit(ExplicitGame),
}

impl GameFile {
    pub fn build(&self) -> Result<Box<dyn Game>> {
        match self {
            GameFile::Descriptor(d) => d.build(),
            GameFile::Explicit(g) => Ok(Box::new(g.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{enumerate_expected_row, eval_pure, PureProfile};
    use crate::verify::{check_largeness, regret, LargenessMode};

    #[test]
    fn independent_payoffs() {
        let g = IndependentGame::symmetric(2, vec![0.3, 0.7]).unwrap();
        assert_eq!(eval_pure(&g, &PureProfile::new(vec![1, 0])).unwrap(), vec![0.7, 0.3]);
        let c = ConstantGame::new(4, 2, 0.5).unwrap();
        assert_eq!(eval_pure(&c, &PureProfile::new(vec![1, 0, 1, 1])).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn explicit_lookup_is_row_major() {
        // n=2, k=2: profiles (0,0),(0,1),(1,0),(1,1)
        let g = ExplicitGame::new(2, 2, 2.0, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        assert_eq!(eval_pure(&g, &PureProfile::new(vec![0, 1])).unwrap(), vec![0.2, 0.6]);
        assert!(ExplicitGame::new(2, 2, 1.0, vec![0.5; 7]).is_err());
        assert!(ExplicitGame::new(1, 2, 1.0, vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn linear_influence_seed_7_is_third_large() {
        let g = gen_linear_influence(3, 2, 1.0, 7).unwrap();
        let chk = check_largeness(&g, 1.0 / 3.0, LargenessMode::Exhaustive).unwrap();
        assert!(chk.holds, "{chk:?}");
        // 3 deviators x 4 unordered profile pairs x 2 affected players
        assert_eq!(chk.tested, 24);
    }

    #[test]
    fn linear_influence_c0_ignores_opponents() {
        let g = gen_linear_influence(4, 3, 0.0, 1).unwrap();
        let a = MixedProfile::uniform(4, 3);
        let b = MixedProfile::pure(&[2, 0, 1, 2], 3).unwrap();
        for i in 0..4 {
            let mut ra = vec![0.0; 3];
            let mut rb = vec![0.0; 3];
            g.expected_row(i, &a, &mut ra).unwrap();
            g.expected_row(i, &b, &mut rb).unwrap();
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn linear_influence_closed_form_matches_enumeration() {
        let g = gen_linear_influence(3, 3, 1.5, 11).unwrap();
        let p = MixedProfile::from_rows(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.1, 0.3],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        for i in 0..3 {
            let mut fast = vec![0.0; 3];
            let mut slow = vec![0.0; 3];
            g.expected_row(i, &p, &mut fast).unwrap();
            enumerate_expected_row(&g, i, &p, &mut slow).unwrap();
            for j in 0..3 {
                assert!((fast[j] - slow[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lower_bound_family() {
        assert!(gen_lower_bound(5, 2.0, 1).is_err());
        let g = gen_lower_bound(10, 4.0, 1).unwrap();
        assert_eq!(g.bits(), gen_lower_bound(10, 4.0, 1).unwrap().bits());
        assert_eq!((g.high_mean(), g.low_mean()), (0.75, 0.25));
        let b = MixedProfile::pure(g.bits(), 2).unwrap();
        let wrong: Vec<usize> = g.bits().iter().map(|b| 1 - b).collect();
        let w = MixedProfile::pure(&wrong, 2).unwrap();
        for i in 0..10 {
            assert_eq!(regret(&g, &b, i).unwrap(), 0.0);
            assert!((regret(&g, &w, i).unwrap() - 0.5).abs() < 1e-15);
        }
        // linear in own mixing: ((l-2)/l) * (1 - p_i(b_i))
        let probs: Vec<f64> = (0..10).map(|i| if g.bits()[i] == 1 { 0.3 } else { 0.7 }).collect();
        let p = MixedProfile::from_binary(&probs).unwrap();
        for i in 0..10 {
            assert!((regret(&g, &p, i).unwrap() - 0.5 * 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_tensor_guard_and_band() {
        assert!(gen_tiny_tensor(13, 2, 0.5, 0).is_err());
        let g = gen_tiny_tensor(3, 2, 1.0 / 3.0, 5).unwrap();
        assert!(g.payoffs().iter().all(|&x| (1.0 / 3.0..=2.0 / 3.0).contains(&x)));
        assert!((g.largeness() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn descriptor_json_round_trip() {
        let d = FamilyDescriptor {
            spec: FamilySpec::LinearInfluence { n: 50, k: 2, c: 1.0, template: WeightTemplate::Uniform },
            seed: 7,
        };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(
            s,
            r#"{"family":"linear_influence","params":{"n":50,"k":2,"c":1.0,"template":"uniform"},"seed":7}"#
        );
        let back: GameFile = serde_json::from_str(&s).unwrap();
        assert_eq!(back, GameFile::Descriptor(d.clone()));
        let explicit: GameFile =
            serde_json::from_str(r#"{"n":1,"k":2,"c":1.0,"payoffs":[0.2,0.9]}"#).unwrap();
        assert!(matches!(explicit, GameFile::Explicit(_)));
        let minimal: FamilyDescriptor =
            serde_json::from_str(r#"{"family":"linear_influence","params":{"n":5,"c":1},"seed":1}"#)
                .unwrap();
        assert_eq!(minimal.spec.players(), 5);
    }
}
