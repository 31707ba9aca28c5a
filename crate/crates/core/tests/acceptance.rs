//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lgl_core::binary::{PlaneGeometry, UNParams};
use lgl_core::blocks::{bu, bu_bound, ceiling_violations, max_left_sum, BuParams, TruncatedTriangle};
use lgl_core::continuous::simulate_ucn;
use lgl_core::experiment::{
    bound_table, run_one, sweep, write_bound_csv, write_sweep_csv, AlgoParams, Algorithm, OracleConfig, RunSpec,
    SweepConfig,
};
use lgl_core::families::{FamilySpec, WeightTemplate};
use lgl_core::oracle::binary_sample_count;
use lgl_core::verify::strategy_payoff_state;
use lgl_core::{Game, MixedProfile, OracleSession, Parallelism};

type Check = Result<(bool, String), Box<dyn std::error::Error>>;
/// Name, runtime limit in seconds, and check.
type Criterion = (&'static str, u64, fn() -> Check);

const EXEC: Parallelism = Parallelism::Parallel;

fn linear(n: usize, k: usize, c: f64) -> FamilySpec {
    FamilySpec::LinearInfluence { n, k, c, template: WeightTemplate::Uniform }
}

fn spec(game: FamilySpec, algorithm: Algorithm, params: AlgoParams) -> RunSpec {
    RunSpec { game, algorithm, params, oracle: OracleConfig::Exact }
}

/// Largest max-regret over `seeds` for one exact run specification.
fn worst_regret(spec: &RunSpec, seeds: std::ops::Range<u64>) -> Result<f64, Box<dyn std::error::Error>> {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        worst = worst.max(run_one(spec, seed, EXEC, None)?.report.max_regret);
    }
    Ok(worst)
}

fn uniform_baseline() -> Check {
    let w = worst_regret(&spec(linear(50, 2, 1.0), Algorithm::Uniform, AlgoParams::default()), 0..100)?;
    Ok((w <= 0.5 + 1e-12, format!("worst regret {w:.6} <= 0.5")))
}

fn one_step_bound() -> Check {
    let w = worst_regret(&spec(linear(50, 2, 1.0), Algorithm::OneStep, AlgoParams::default()), 0..100)?;
    Ok((w <= 0.272 + 1e-9, format!("worst regret {w:.6} <= 0.272")))
}

fn two_step_bound() -> Check {
    let w = worst_regret(&spec(linear(50, 2, 1.0), Algorithm::TwoStep, AlgoParams::default()), 0..100)?;
    Ok((w <= 0.25 + 1e-9, format!("worst regret {w:.6} <= 0.25")))
}

fn un_exact() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for alpha in [0.05, 0.125] {
        let params = AlgoParams { alpha: Some(alpha), ..AlgoParams::default() };
        let run = spec(linear(100, 2, 1.0), Algorithm::Un, params);
        let band = PlaneGeometry::new(UNParams::new(alpha, 0.1)?.lambda());
        let (mut worst, mut outside) = (0.0f64, 0usize);
        for seed in 0..50 {
            let out = run_one(&run, seed, EXEC, None)?;
            let game = run.game.build(seed)?;
            for i in 0..game.players() {
                if !band.contains(&strategy_payoff_state(game.as_ref(), &out.profile, i)?) {
                    outside += 1;
                }
            }
            worst = worst.max(out.report.max_regret);
        }
        ok &= outside == 0 && worst <= 0.125 + alpha + 1e-9;
        notes.push(format!("alpha {alpha}: worst {worst:.6}, {outside} states outside band"));
    }
    Ok((ok, notes.join("; ")))
}

fn un_sampled() -> Check {
    let (n, alpha, eta, beta): (usize, f64, f64, f64) = (10, 0.125, 0.1, 0.2);
    let params = UNParams::new(alpha, eta)?;
    let rounds = params.rounds();
    // expected count straight from the closed form
    let per_call = (64.0 / beta.powi(3) * (8.0 * n as f64 * rounds as f64 / eta).ln()).ceil() as u64;
    let expected = (rounds as u64 + 1) * per_call;
    let run = RunSpec {
        game: linear(n, 2, 1.0),
        algorithm: Algorithm::Un,
        params: AlgoParams { alpha: Some(alpha), eta: Some(eta), ..AlgoParams::default() },
        oracle: OracleConfig::Sampling { beta: Some(beta), delta: None },
    };
    let (mut counted_ok, mut within) = (true, 0);
    for seed in 0..50 {
        let out = run_one(&run, seed, EXEC, None)?;
        counted_ok &= out.report.pure_queries == expected;
        if out.report.max_regret <= 0.125 + alpha + 3.0 * beta {
            within += 1;
        }
    }
    Ok((counted_ok && within >= 45, format!("queries {expected} per run (exact: {counted_ok}), {within}/50 within bound")))
}

fn sampling_concentration() -> Check {
    let (n, beta, delta) = (5, 0.25, 0.1);
    let mut good = 0;
    for s in 0..200u64 {
        let game = linear(n, 2, 1.0).build(s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let p: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let profile = MixedProfile::from_binary(&p)?;
        let mut session = OracleSession::new(game.as_ref(), s);
        let est = session.sample_mixed_binary(&profile, beta, delta)?;
        assert_eq!(est.samples, binary_sample_count(n, beta, delta)?);
        let exact = session.exact_mixed(&est.sampled_from)?;
        let all = (0..n).all(|i| (0..2).all(|j| (est.get(i, j) - exact.get(i, j)).abs() <= beta));
        good += all as usize;
    }
    let frac = good as f64 / 200.0;
    Ok((frac >= 0.85, format!("{good}/200 sessions accurate ({frac:.3} >= 0.85)")))
}

fn communication() -> Check {
    let w = worst_regret(&spec(linear(100, 2, 1.0), Algorithm::Communication, AlgoParams::default()), 0..50)?;
    let bound = 137.0 / 1100.0 + 0.05;
    Ok((w <= bound + 1e-9, format!("worst regret {w:.6} <= {bound:.6}")))
}

fn ucn_gamma() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for c in [0.5, 1.0, 2.0, 4.0] {
        let bound = if c <= 2.0 { c / 8.0 } else { 0.5 - 1.0 / (2.0 * c) } + 0.05;
        let w = worst_regret(&spec(linear(100, 2, c), Algorithm::UcnGamma, AlgoParams::default()), 0..20)?;
        ok &= w <= bound + 1e-9;
        notes.push(format!("c={c}: {w:.4} <= {bound:.4}"));
    }
    Ok((ok, notes.join(", ")))
}

fn block_update() -> Check {
    let mut ok = true;
    let (mut cells, mut violations, mut tightest) = (0, 0, f64::INFINITY);
    for c in [0.25, 1.0, 4.0] {
        for k in [2, 3, 8] {
            for blocks in [50, 200] {
                let bound = bu_bound(c, k, Some(blocks), 0.0)?.epsilon;
                for seed in 0..2 {
                    let game = linear(20, k, c).build(seed)?;
                    let mut session = OracleSession::new(game.as_ref(), seed).with_parallelism(EXEC);
                    let run = bu(&mut session, BuParams::exact(blocks)?, Default::default())?;
                    let v = ceiling_violations(game.as_ref(), &run.allocation, EXEC)?;
                    violations += v.len();
                    ok &= run.report.max_regret <= bound + 1e-9 && v.is_empty();
                    tightest = tightest.min(bound - run.report.max_regret);
                    cells += 1;
                }
            }
        }
    }
    Ok((ok, format!("{cells} runs, smallest slack {tightest:.4}, {violations} ceiling violations")))
}

/// Grid maximisation of the left sum by dynamic programming over grid points.
fn grid_left_sum(b: f64, h: f64, k: usize, pitch: f64) -> f64 {
    let m = (b / pitch).round() as usize;
    let xs: Vec<f64> = (0..=m).map(|i| i as f64 * b / m as f64).collect();
    let height = |x: f64| (h * x).min(1.0);
    let mut best: Vec<f64> = xs.iter().map(|&x| height(x) * (b - x)).collect();
    for _ in 1..k {
        let mut next = vec![f64::NEG_INFINITY; xs.len()];
        // suffix scan: next[i] = max_j>=i best[j] + H(x_i) (x_j - x_i)
        for (i, slot) in next.iter_mut().enumerate() {
            let hx = height(xs[i]);
            for j in i..xs.len() {
                let v = best[j] + hx * (xs[j] - xs[i]);
                if v > *slot {
                    *slot = v;
                }
            }
        }
        best = next;
    }
    best.into_iter().fold(0.0, f64::max)
}

fn left_sum_oracle() -> Check {
    let (mut worst, mut cells) = (0.0f64, 0);
    for b in [0.5, 1.0, 1.5] {
        for h in [0.5, 1.0, 2.0, 4.0] {
            for k in 1..=4 {
                let (closed, _) = max_left_sum(&TruncatedTriangle::new(b, h)?, k)?;
                worst = worst.max((closed - grid_left_sum(b, h, k, 1e-3)).abs());
                cells += 1;
            }
        }
    }
    Ok((worst <= 2e-3, format!("{cells} cells, largest gap {worst:.2e}")))
}

fn continuous() -> Check {
    let h = 1e-3;
    let mut failed = Vec::new();
    let mut latest: f64 = 0.0;
    for seed in 0..10 {
        let game = linear(20, 2, 1.0).build(seed)?;
        let tr = simulate_ucn(game.as_ref(), h, 1.0)?;
        for i in 0..tr.players() {
            latest = latest.max(tr.first_entry(i).unwrap_or(f64::INFINITY));
        }
        if !tr.reach_and_stay(0.5 + 2.0 * h) {
            failed.push(seed);
        }
    }
    Ok((failed.is_empty(), format!("latest entry t={latest:.4}, failing seeds {failed:?}")))
}

fn comparison_table() -> Check {
    let cs = [0.5, 1.0, 2.0, 4.0];
    let rows = bound_table(&cs, &[2], &[None])?;
    let mut ok = true;
    let mut notes = Vec::new();
    for (&c, pair) in cs.iter().zip(rows.chunks(2)) {
        let (ucn, blk) = (&pair[0], &pair[1]);
        let want_ucn = if c <= 2.0 { c / 8.0 } else { 0.5 - 1.0 / (2.0 * c) };
        let want_bu = if c <= 1.0 { c / 2.0 } else { 1.0 - 1.0 / (2.0 * c) };
        ok &= ucn.method == "ucn_gamma" && blk.method == "bu";
        ok &= (ucn.epsilon - want_ucn).abs() < 1e-12 && (blk.epsilon - want_bu).abs() < 1e-12;
        ok &= ucn.epsilon < blk.epsilon;
        notes.push(format!("c={c}: {} < {}", ucn.epsilon, blk.epsilon));
    }
    Ok((ok, notes.join(", ")))
}

fn determinism() -> Check {
    let sweep_cfg = SweepConfig {
        algorithms: vec![Algorithm::Un, Algorithm::Communication, Algorithm::UcnGamma, Algorithm::Bu],
        n: vec![12],
        c: vec![0.5, 2.0],
        k: vec![2, 3],
        alpha: vec![0.125],
        blocks: vec![30],
        seeds: vec![1, 2],
        ..SweepConfig::default()
    };
    let sampled_cfg = SweepConfig {
        algorithms: vec![Algorithm::Un],
        n: vec![6],
        c: vec![1.0],
        k: vec![2],
        alpha: vec![0.2],
        oracle: OracleConfig::Sampling { beta: Some(0.3), delta: None },
        seeds: vec![3, 4],
        ..SweepConfig::default()
    };
    let render = |cfg: &SweepConfig, exec| -> Result<Vec<u8>, Box<dyn std::error::Error>> {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &sweep(cfg, exec, false)?)?;
        Ok(buf)
    };
    let trajectory = || -> Result<Vec<u8>, Box<dyn std::error::Error>> {
        let game = linear(8, 2, 1.0).build(5)?;
        let mut buf = Vec::new();
        simulate_ucn(game.as_ref(), 1e-2, 0.6)?.write_csv(&mut buf, 3)?;
        Ok(buf)
    };
    let table = || -> Result<Vec<u8>, Box<dyn std::error::Error>> {
        let mut buf = Vec::new();
        write_bound_csv(&mut buf, &bound_table(&[0.5, 1.0, 2.0, 4.0], &[2, 3, 8], &[Some(50), None])?)?;
        Ok(buf)
    };
    let mut ok = true;
    for cfg in [&sweep_cfg, &sampled_cfg] {
        let first = render(cfg, Parallelism::Parallel)?;
        ok &= first == render(cfg, Parallelism::Parallel)? && first == render(cfg, Parallelism::Sequential)?;
    }
    ok &= trajectory()? == trajectory()?;
    ok &= table()? == table()?;
    Ok((ok, "sweep (exact and sampled), trajectory and bound CSVs identical across reruns".into()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("uniform baseline", 5, uniform_baseline),
        ("one-step bound", 5, one_step_bound),
        ("two-step bound", 5, two_step_bound),
        ("un exact", 30, un_exact),
        ("un sampled", 120, un_sampled),
        ("sampling concentration", 60, sampling_concentration),
        ("communication", 60, communication),
        ("ucn-gamma discrete", 120, ucn_gamma),
        ("block update", 120, block_update),
        ("left-sum oracle", 60, left_sum_oracle),
        ("continuous ucn", 60, continuous),
        ("bound comparison", 10, comparison_table),
        ("determinism", 120, determinism),
    ];
    let mut failures = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok((pass, detail)) => (pass && took < Duration::from_secs(limit), detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += !pass as usize;
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name} ({:.2} s, limit {limit} s): {detail}", i + 1, took.as_secs_f64());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
