//! Batch experiments: one algorithm on one game family over many seeds,
//! parameter sweeps, and bound tables. Output is deterministic given the
//! configuration except for optional wall-clock columns.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::binary::plane::largeness_regret_bound;
use crate::binary::{
    communication_dynamic, one_step, two_step, ucn_gamma_discrete, un, uniform_run, OneStepParams, OracleMode,
    UNParams, COMMUNICATION_BOUND,
};
use crate::blocks::{bu, bu_bound, BuParams};
use crate::continuous::{simulate_ucn_gamma_with, simulate_ucn_with, Trajectory};
use crate::error::{arg, Error, Result};
use crate::exec::Parallelism;
use crate::families::{FamilySpec, WeightTemplate};
use crate::game::{Game, MixedProfile};
use crate::oracle::{OracleSession, StochasticGame};
use crate::report::RunReport;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_BLOCKS: usize = 100;
pub const DEFAULT_STEP_H: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 1.0;

const SESSION_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Session seed for game seed `seed`. Keeps the oracle's streams independent
/// of the generator's.
pub fn session_seed(seed: u64) -> u64 {
    seed ^ SESSION_SALT
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Uniform,
    OneStep,
    TwoStep,
    Un,
    Communication,
    UcnGamma,
    Bu,
    UcnContinuous,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Uniform,
        Algorithm::OneStep,
        Algorithm::TwoStep,
        Algorithm::Un,
        Algorithm::Communication,
        Algorithm::UcnGamma,
        Algorithm::Bu,
        Algorithm::UcnContinuous,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Uniform => "uniform",
            Algorithm::OneStep => "one_step",
            Algorithm::TwoStep => "two_step",
            Algorithm::Un => "un",
            Algorithm::Communication => "communication",
            Algorithm::UcnGamma => "ucn_gamma",
            Algorithm::Bu => "bu",
            Algorithm::UcnContinuous => "ucn_continuous",
        }
    }

    /// Needs a two-action game.
    pub fn is_binary(&self) -> bool {
        !matches!(self, Algorithm::Bu)
    }

    fn uses_alpha(&self, sampled: bool) -> bool {
        match self {
            Algorithm::Un | Algorithm::Communication | Algorithm::UcnGamma => true,
            Algorithm::Bu => sampled,
            _ => false,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::Argument(format!("unknown algorithm '{s}'")))
    }
}

/// Algorithm parameters; unset fields take per-algorithm defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Largeness used by the surface dynamics; defaults to the game's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl AlgoParams {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA)
    }
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(DEFAULT_ETA)
    }
    pub fn blocks(&self) -> usize {
        self.blocks.unwrap_or(DEFAULT_BLOCKS)
    }
    pub fn step_h(&self) -> f64 {
        self.step_h.unwrap_or(DEFAULT_STEP_H)
    }
    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(DEFAULT_HORIZON)
    }
    fn one_step(&self) -> OneStepParams {
        let d = OneStepParams::default();
        OneStepParams { threshold: self.threshold.unwrap_or(d.threshold), shift: self.shift.unwrap_or(d.shift) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleConfig {
    /// Exact mixed oracle.
    #[default]
    Exact,
    /// Sampling estimator on deterministic payoffs.
    Sampling {
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
    },
    /// Sampling estimator on Bernoulli payoffs with the game's payoffs as means.
    Stochastic {
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
    },
}

impl OracleConfig {
    pub fn mode(&self) -> OracleMode {
        match *self {
            OracleConfig::Exact => OracleMode::Exact,
            OracleConfig::Sampling { beta, delta } | OracleConfig::Stochastic { beta, delta } => {
                OracleMode::Sampled { beta, delta }
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, OracleConfig::Exact)
    }
}

/// One algorithm on one family, without seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub game: FamilySpec,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub params: AlgoParams,
    #[serde(default)]
    pub oracle: OracleConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub run: RunSpec,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return arg("seed list is empty");
        }
        Ok(())
    }
}

/// Theoretical regret bound the run is expected to meet, if one applies.
pub fn declared_bound(algorithm: Algorithm, params: &AlgoParams, c: f64, k: usize, exact: bool) -> Result<Option<f64>> {
    let small = c <= 1.0;
    Ok(match algorithm {
        Algorithm::Uniform => Some(0.5),
        Algorithm::OneStep => (small && params.threshold.is_none() && params.shift.is_none()).then_some(0.272),
        Algorithm::TwoStep => small.then_some(0.25),
        Algorithm::Un => small.then_some(0.125 + params.alpha()),
        Algorithm::Communication => small.then_some(COMMUNICATION_BOUND + params.alpha()),
        Algorithm::UcnGamma => {
            let c = params.c.unwrap_or(c);
            Some(largeness_regret_bound(c) + params.alpha())
        }
        Algorithm::Bu => {
            let alpha = if exact { 0.0 } else { params.alpha() };
            Some(bu_bound(c, k, Some(params.blocks()), alpha)?.epsilon)
        }
        Algorithm::UcnContinuous => None,
    })
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub profile: MixedProfile,
    pub bound: Option<f64>,
    pub wall_ms: f64,
    pub trajectory: Option<Trajectory>,
}

impl RunOutcome {
    /// Whether a declared bound is exceeded (beyond `1e-9`).
    pub fn violates_bound(&self) -> bool {
        self.bound.is_some_and(|b| self.report.max_regret > b + 1e-9)
    }
}

/// Runs `spec` on the game generated from `seed`.
pub fn run_one(
    spec: &RunSpec,
    seed: u64,
    exec: Parallelism,
    trace: Option<Box<dyn Write + Send>>,
) -> Result<RunOutcome> {
    let base = spec.game.build(seed)?;
    let stochastic;
    let game: &dyn Game = if matches!(spec.oracle, OracleConfig::Stochastic { .. }) {
        stochastic = StochasticGame::new(base);
        &stochastic
    } else {
        base.as_ref()
    };
    let start = Instant::now();
    let mut session = OracleSession::new(game, session_seed(seed)).with_parallelism(exec);
    if let Some(t) = trace {
        session = session.with_trace(t);
    }
    let p = &spec.params;
    let mode = spec.oracle.mode();
    let mut trajectory = None;
    let (mut report, profile) = match spec.algorithm {
        Algorithm::Uniform => split(uniform_run(&session)?),
        Algorithm::OneStep => split(one_step(&mut session, p.one_step(), mode)?),
        Algorithm::TwoStep => split(two_step(&mut session, mode)?),
        Algorithm::Un => split(un(&mut session, UNParams::new(p.alpha(), p.eta())?, mode)?),
        Algorithm::Communication => {
            split(communication_dynamic(&mut session, UNParams::new(p.alpha(), p.eta())?, mode)?)
        }
        Algorithm::UcnGamma => {
            let c = p.c.unwrap_or(game.largeness());
            split(ucn_gamma_discrete(&mut session, p.alpha(), p.eta(), c, mode)?)
        }
        Algorithm::Bu => {
            let r = bu(&mut session, BuParams::new(p.blocks(), p.alpha(), p.eta())?, mode)?;
            (r.report, r.profile)
        }
        Algorithm::UcnContinuous => {
            if !spec.oracle.is_exact() {
                return arg("ucn_continuous needs the exact oracle");
            }
            let c = p.c.unwrap_or(game.largeness());
            let tr = if c == 1.0 {
                simulate_ucn_with(game, p.step_h(), p.horizon(), exec)?
            } else {
                simulate_ucn_gamma_with(game, c, p.step_h(), p.horizon(), exec)?
            };
            let profile = tr.final_profile()?;
            let steps = tr.points.len() as u64 - 1;
            let mut r = RunReport::for_profile(
                Algorithm::UcnContinuous.name(),
                serde_json::json!({"c": c, "step_h": p.step_h(), "horizon": p.horizon(), "band": tr.band}),
                game,
                seed,
                steps,
                &profile,
                exec,
            )?;
            r.qm_calls = steps + 1;
            trajectory = Some(tr);
            (r, profile)
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    report.seed = seed;
    let bound = declared_bound(spec.algorithm, p, game.largeness(), game.actions(), spec.oracle.is_exact())?;
    Ok(RunOutcome { report, profile, bound, wall_ms, trajectory })
}

fn split(r: crate::binary::BinaryRun) -> (RunReport, MixedProfile) {
    (r.report, r.profile)
}

/// Runs every seed, in parallel across seeds, returning outcomes in seed order.
pub fn run_experiment(config: &ExperimentConfig, exec: Parallelism) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    exec.map(config.seeds.len(), |i| run_one(&config.run, config.seeds[i], Parallelism::Sequential, None))
        .into_iter()
        .collect()
}

/// Cross product of parameter grids over linear-influence games.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub c: Vec<f64>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub blocks: Vec<usize>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub template: WeightTemplate,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub spec: RunSpec,
    pub n: usize,
    pub c: f64,
    pub k: usize,
}

impl SweepConfig {
    /// Grid cells. Binary algorithms only see `k = 2`; grids that do not
    /// apply to an algorithm collapse to a single unset value.
    pub fn cells(&self) -> Vec<SweepCell> {
        let sampled = !self.oracle.is_exact();
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            let alphas: Vec<Option<f64>> = if algorithm.uses_alpha(sampled) {
                self.alpha.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let blocks: Vec<Option<usize>> = if algorithm == Algorithm::Bu {
                self.blocks.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for &n in &self.n {
                for &c in &self.c {
                    for &k in self.k.iter().filter(|&&k| !algorithm.is_binary() || k == 2) {
                        for &alpha in &alphas {
                            for &b in &blocks {
                                let params = AlgoParams { alpha, eta: self.eta, blocks: b, ..AlgoParams::default() };
                                let game = FamilySpec::LinearInfluence { n, k, c, template: self.template };
                                let spec = RunSpec { game, algorithm, params, oracle: self.oracle };
                                out.push(SweepCell { spec, n, c, k });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub n: usize,
    pub c: f64,
    pub k: usize,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub blocks: Option<usize>,
    pub seed: u64,
    pub max_regret: f64,
    pub bound: Option<f64>,
    pub pure_queries: u64,
    pub qm_calls: u64,
    pub wall_ms: Option<f64>,
}

pub const SWEEP_HEADER: &str = "algorithm,n,c,k,alpha,eta,blocks,seed,max_regret,bound,pure_queries,qm_calls,wall_ms";

fn opt<T: fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map(ToString::to_string).unwrap_or_default()
}

impl SweepRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.n,
            self.c,
            self.k,
            opt(&self.alpha),
            opt(&self.eta),
            opt(&self.blocks),
            self.seed,
            self.max_regret,
            opt(&self.bound),
            self.pure_queries,
            self.qm_calls,
            opt(&self.wall_ms),
        )
    }

    fn sort_key(&self, other: &Self) -> std::cmp::Ordering {
        let f = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a.total_cmp(&b),
            (a, b) => a.is_some().cmp(&b.is_some()),
        };
        self.algorithm
            .cmp(&other.algorithm)
            .then(self.n.cmp(&other.n))
            .then(self.c.total_cmp(&other.c))
            .then(self.k.cmp(&other.k))
            .then(f(self.alpha, other.alpha))
            .then(self.blocks.cmp(&other.blocks))
            .then(self.seed.cmp(&other.seed))
    }
}

/// Runs all cells and seeds, in parallel, and returns rows in sorted order.
/// `timing` fills `wall_ms`; without it the output is byte-deterministic.
pub fn sweep(config: &SweepConfig, exec: Parallelism, timing: bool) -> Result<Vec<SweepRow>> {
    let cells = config.cells();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| config.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = exec.map(jobs.len(), |j| {
        let (ci, seed) = jobs[j];
        let cell = &cells[ci];
        run_one(&cell.spec, seed, Parallelism::Sequential, None).map(|o| SweepRow {
            algorithm: cell.spec.algorithm,
            n: cell.n,
            c: cell.c,
            k: cell.k,
            alpha: cell.spec.params.alpha,
            eta: cell.spec.params.eta,
            blocks: cell.spec.params.blocks,
            seed,
            max_regret: o.report.max_regret,
            bound: o.bound,
            pure_queries: o.report.pure_queries,
            qm_calls: o.report.qm_calls,
            wall_ms: timing.then_some(o.wall_ms),
        })
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    rows.sort_by(SweepRow::sort_key);
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv())?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub c: f64,
    pub k: usize,
    /// `None` is the `N -> inf` limit.
    pub blocks: Option<usize>,
    pub method: &'static str,
    pub epsilon_case: &'static str,
    pub epsilon: f64,
}

pub const BOUND_HEADER: &str = "c,k,N,method,epsilon_case,epsilon";

impl BoundRow {
    pub fn csv(&self) -> String {
        let n = self.blocks.map_or_else(|| "inf".to_string(), |b| b.to_string());
        format!("{},{},{},{},{},{}", self.c, self.k, n, self.method, self.epsilon_case, self.epsilon)
    }
}

/// Surface-dynamic and block-update bounds for every `(c, k, N)`.
pub fn bound_table(cs: &[f64], ks: &[usize], blocks: &[Option<usize>]) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for &c in cs {
        for &k in ks {
            for &n in blocks {
                rows.push(BoundRow {
                    c,
                    k,
                    blocks: n,
                    method: "ucn_gamma",
                    epsilon_case: if c <= 2.0 { "c_le_2" } else { "c_gt_2" },
                    epsilon: largeness_regret_bound(c),
                });
                let b = bu_bound(c, k, n, 0.0)?;
                rows.push(BoundRow { c, k, blocks: n, method: "bu", epsilon_case: b.case.as_str(), epsilon: b.epsilon });
            }
        }
    }
    Ok(rows)
}

pub fn write_bound_csv<W: Write>(mut w: W, rows: &[BoundRow]) -> Result<()> {
    writeln!(w, "{BOUND_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv())?;
    }
    Ok(())
}
