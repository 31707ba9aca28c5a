use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lgl_core::experiment::{
    bound_table, run_one, sweep, write_bound_csv, write_sweep_csv, AlgoParams, Algorithm, ExperimentConfig,
    OracleConfig, RunSpec, SweepConfig,
};
use lgl_core::families::{materialize, FamilyDescriptor, FamilySpec, GameFile, WeightTemplate};
use lgl_core::verify::is_approx_ne;
use lgl_core::{MixedProfile, Parallelism};

#[derive(Parser)]
#[command(name = "lgl", version, about = "Approximate equilibria of large games from payoff queries")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a game descriptor (or an explicit payoff tensor).
    Generate(GenerateArgs),
    /// Run one algorithm over a list of seeds and write one report per seed.
    Run(RunArgs),
    /// Run parameter grids and write a CSV, or write a bound table.
    Sweep(SweepArgs),
    /// Check a profile against a regret threshold.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyName {
    LinearInfluence,
    LowerBound,
    TinyTensor,
    Independent,
    Constant,
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateName {
    Uniform,
    MatchingPennies,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    family: Option<FamilyName>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Largeness numerator; the game is c/n-large.
    #[arg(long)]
    c: Option<f64>,
    /// Payoff band width of tiny-tensor games.
    #[arg(long)]
    gamma: Option<f64>,
    /// Lower-bound family parameter (> 2).
    #[arg(long)]
    ell: Option<f64>,
    /// Per-action payoffs of an independent game, comma separated.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Payoff of a constant game.
    #[arg(long)]
    value: Option<f64>,
    #[arg(long, value_enum)]
    template: Option<TemplateName>,
}

impl FamilyArgs {
    fn spec(&self) -> Result<FamilySpec> {
        let family = self.family.ok_or_else(|| anyhow!("--family is required"))?;
        let n = self.n.ok_or_else(|| anyhow!("--n is required"))?;
        Ok(match family {
            FamilyName::LinearInfluence => FamilySpec::LinearInfluence {
                n,
                k: self.k.unwrap_or(2),
                c: self.c.unwrap_or(1.0),
                template: match self.template {
                    Some(TemplateName::MatchingPennies) => WeightTemplate::MatchingPennies,
                    _ => WeightTemplate::Uniform,
                },
            },
            FamilyName::LowerBound => FamilySpec::LowerBound {
                n,
                ell: self.ell.ok_or_else(|| anyhow!("--ell is required for lower-bound"))?,
            },
            FamilyName::TinyTensor => FamilySpec::TinyTensor {
                n,
                k: self.k.unwrap_or(2),
                gamma: self.gamma.ok_or_else(|| anyhow!("--gamma is required for tiny-tensor"))?,
            },
            FamilyName::Independent => {
                if self.values.is_empty() {
                    bail!("--values is required for independent");
                }
                FamilySpec::Independent { n, values: self.values.clone(), c: self.c.unwrap_or(1.0) }
            }
            FamilyName::Constant => FamilySpec::Constant {
                n,
                k: self.k.unwrap_or(2),
                value: self.value.ok_or_else(|| anyhow!("--value is required for constant"))?,
            },
        })
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the full payoff tensor instead of the descriptor.
    #[arg(long)]
    materialize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleName {
    Exact,
    Sampling,
    Stochastic,
}

#[derive(Args, Clone)]
struct OracleArgs {
    #[arg(long, value_enum, default_value = "exact")]
    oracle: OracleName,
    /// Sampling accuracy (defaults per algorithm).
    #[arg(long)]
    beta: Option<f64>,
    /// Per-call failure probability (defaults per algorithm).
    #[arg(long)]
    delta: Option<f64>,
}

impl OracleArgs {
    fn config(&self) -> OracleConfig {
        let (beta, delta) = (self.beta, self.delta);
        match self.oracle {
            OracleName::Exact => OracleConfig::Exact,
            OracleName::Sampling => OracleConfig::Sampling { beta, delta },
            OracleName::Stochastic => OracleConfig::Stochastic { beta, delta },
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; the flags below are ignored except output paths.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long)]
    algo: Option<String>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Number of blocks N for bu.
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    shift: Option<f64>,
    /// Step size of ucn-continuous.
    #[arg(long)]
    step_h: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Seeds: comma list and/or ranges `a..b` (exclusive) or `a..=b`.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Report output (JSON lines); stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-query trace (JSON lines); a seed suffix is added for several seeds.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Trajectory CSV for ucn-continuous; a seed suffix is added for several seeds.
    #[arg(long)]
    trajectory_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    downsample: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep config; grid flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    alpha: Vec<f64>,
    /// Block counts; `inf` is allowed with --bound-table.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    blocks: Vec<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Fill the wall_ms column (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    /// Write theoretical bounds for every (c, k, N) instead of running.
    #[arg(long)]
    bound_table: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Game file (descriptor or explicit tensor).
    #[arg(long)]
    game: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform` or a profile JSON file `{"k":..,"probs":[[..],..]}`.
    #[arg(long, default_value = "uniform")]
    profile: String,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let exec = if cli.sequential { Parallelism::Sequential } else { Parallelism::Parallel };
    let result = match cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Run(a) => run(a, exec),
        Command::Sweep(a) => sweep_cmd(a, exec).map(|_| true),
        Command::Verify(a) => verify(a, exec),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LGL_THREADS") {
        let n: usize = v.parse().with_context(|| format!("LGL_THREADS={v} is not a number"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `path` for a single seed, `stem.seed.ext` otherwise.
fn per_seed(path: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{seed}"),
    };
    path.with_file_name(name)
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            seeds.extend(a.parse::<u64>()?..=b.parse::<u64>()?);
        } else if let Some((a, b)) = part.split_once("..") {
            seeds.extend(a.parse::<u64>()?..b.parse::<u64>()?);
        } else {
            seeds.push(part.parse().with_context(|| format!("bad seed '{part}'"))?);
        }
    }
    Ok(seeds)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = a.family.spec()?;
    let descriptor = FamilyDescriptor { spec, seed: a.seed };
    let mut w = output(a.out.as_deref())?;
    if a.materialize {
        let game = descriptor.build()?;
        serde_json::to_writer(&mut w, &materialize(game.as_ref())?)?;
    } else {
        serde_json::to_writer(&mut w, &descriptor)?;
    }
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(a: RunArgs, exec: Parallelism) -> Result<bool> {
    let config = match &a.config {
        Some(path) => {
            let mut cfg: ExperimentConfig = serde_json::from_reader(File::open(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            cfg.out = a.out.clone().or(cfg.out);
            cfg.trace = a.trace.clone().or(cfg.trace);
            cfg
        }
        None => {
            let algorithm: Algorithm = a.algo.as_deref().ok_or_else(|| anyhow!("--algo is required"))?.parse()?;
            let params = AlgoParams {
                alpha: a.alpha,
                eta: a.eta,
                c: None,
                blocks: a.blocks,
                threshold: a.threshold,
                shift: a.shift,
                step_h: a.step_h,
                horizon: a.horizon,
            };
            ExperimentConfig {
                run: RunSpec { game: a.family.spec()?, algorithm, params, oracle: a.oracle.config() },
                seeds: parse_seeds(&a.seeds)?,
                out: a.out.clone(),
                trace: a.trace.clone(),
            }
        }
    };
    config.validate()?;
    let many = config.seeds.len() > 1;
    let outcomes = exec.map(config.seeds.len(), |i| -> Result<_> {
        let seed = config.seeds[i];
        let trace: Option<Box<dyn Write + Send>> = match &config.trace {
            Some(p) => Some(Box::new(BufWriter::new(File::create(per_seed(p, seed, many))?))),
            None => None,
        };
        let outcome = run_one(&config.run, seed, Parallelism::Sequential, trace)?;
        if let (Some(path), Some(tr)) = (&a.trajectory_out, &outcome.trajectory) {
            let f = BufWriter::new(File::create(per_seed(path, seed, many))?);
            tr.write_csv(f, a.downsample)?;
        }
        Ok(outcome)
    });
    let mut w = output(config.out.as_deref())?;
    let mut ok = true;
    for o in outcomes {
        let o = o?;
        serde_json::to_writer(&mut w, &o.report)?;
        writeln!(w)?;
        if config.run.oracle.is_exact() && o.violates_bound() {
            ok = false;
            eprintln!(
                "bound violated: {} seed {} max_regret {} > {}",
                o.report.algorithm,
                o.report.seed,
                o.report.max_regret,
                o.bound.unwrap_or_default()
            );
        }
    }
    w.flush()?;
    Ok(ok)
}

fn parse_blocks(values: &[String]) -> Result<Vec<Option<usize>>> {
    values
        .iter()
        .map(|v| match v.trim() {
            "inf" => Ok(None),
            s => Ok(Some(s.parse().with_context(|| format!("bad block count '{s}'"))?)),
        })
        .collect()
}

fn sweep_cmd(a: SweepArgs, exec: Parallelism) -> Result<()> {
    let blocks = parse_blocks(&a.blocks)?;
    let mut w = output(a.out.as_deref())?;
    if a.bound_table {
        let rows = bound_table(&a.c, &a.k, &blocks)?;
        write_bound_csv(&mut w, &rows)?;
        w.flush()?;
        return Ok(());
    }
    let config = match &a.config {
        Some(path) => serde_json::from_reader(File::open(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => SweepConfig {
            algorithms: a.algo.iter().map(|s| s.parse()).collect::<lgl_core::Result<_>>()?,
            n: a.n.clone(),
            c: a.c.clone(),
            k: a.k.clone(),
            alpha: a.alpha.clone(),
            blocks: blocks
                .into_iter()
                .map(|b| b.ok_or_else(|| anyhow!("--blocks inf is only valid with --bound-table")))
                .collect::<Result<_>>()?,
            eta: a.eta,
            template: WeightTemplate::Uniform,
            oracle: a.oracle.config(),
            seeds: parse_seeds(&a.seeds)?,
        },
    };
    let rows = sweep(&config, exec, a.timing)?;
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn verify(a: VerifyArgs, exec: Parallelism) -> Result<bool> {
    let game = match &a.game {
        Some(path) => {
            let file: GameFile = serde_json::from_reader(File::open(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            file.build()?
        }
        None => a.family.spec()?.build(a.seed)?,
    };
    let profile = if a.profile == "uniform" {
        MixedProfile::uniform(game.players(), game.actions())
    } else {
        let p: MixedProfile = serde_json::from_reader(File::open(&a.profile)?)
            .with_context(|| format!("parsing {}", a.profile))?;
        p.validate_for(game.players(), game.actions())?;
        p
    };
    let _ = exec;
    let (pass, report) = is_approx_ne(game.as_ref(), &profile, a.eps)?;
    let mut w = output(a.out.as_deref())?;
    serde_json::to_writer(
        &mut w,
        &serde_json::json!({"pass": pass, "eps": a.eps, "max_regret": report.max_regret, "report": report}),
    )?;
    writeln!(w)?;
    w.flush()?;
    if !pass {
        eprintln!("regret {} exceeds eps {}", report.max_regret, a.eps);
    }
    Ok(pass)
}
