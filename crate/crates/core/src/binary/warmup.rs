//! Fixed-round procedures starting from the uniform profile.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{estimator_json, require_binary, BinaryRun, OracleMode, RoundSnapshot};
use crate::error::{arg, Result};
use crate::game::MixedProfile;
use crate::oracle::OracleSession;
use crate::report::RunReport;

/// Default sampling accuracy for the fixed-round procedures.
pub const WARMUP_BETA: f64 = 0.05;
/// Total failure probability, split evenly over the procedure's oracle calls.
pub const WARMUP_ETA: f64 = 0.1;

pub fn uniform_profile(n: usize) -> MixedProfile {
    MixedProfile::uniform(n, 2)
}

/// The uniform profile, reported without issuing any query.
pub fn uniform_run(session: &OracleSession<'_>) -> Result<BinaryRun> {
    require_binary(session)?;
    let profile = uniform_profile(session.game().players());
    let report = RunReport::finish("uniform", json!({}), session, 0, &profile)?;
    Ok(BinaryRun { profile, report, history: Vec::new() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepParams {
    /// Discrepancy above which a player moves.
    pub threshold: f64,
    /// How far a moving player shifts from 1/2.
    pub shift: f64,
}

impl Default for OneStepParams {
    fn default() -> Self {
        OneStepParams {
            threshold: 2.0 - (11.0f64 / 3.0).sqrt(),
            shift: (11.0f64 / 48.0).sqrt() - 0.25,
        }
    }
}

impl OneStepParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) || !(0.0..=0.5).contains(&self.shift) {
            return arg("one_step needs threshold in [0,1] and shift in [0,1/2]");
        }
        Ok(())
    }
}

/// One observation at uniform; players whose discrepancy exceeds the
/// threshold move `shift` toward their best response.
pub fn one_step(session: &mut OracleSession<'_>, params: OneStepParams, mode: OracleMode) -> Result<BinaryRun> {
    require_binary(session)?;
    params.validate()?;
    let n = session.game().players();
    let est = mode.estimator(WARMUP_BETA, WARMUP_ETA);
    let mut profile = uniform_profile(n);
    let v = session.observe(&profile, est)?;
    let history = vec![RoundSnapshot::new(&profile, &v)];
    for i in 0..n {
        let d = v.get(i, 1) - v.get(i, 0);
        if d > params.threshold {
            profile.set_binary(i, 0.5 + params.shift);
        } else if -d > params.threshold {
            profile.set_binary(i, 0.5 - params.shift);
        }
    }
    let report = RunReport::finish(
        "one_step",
        json!({"threshold": params.threshold, "shift": params.shift, "oracle": estimator_json(est)}),
        session,
        1,
        &profile,
    )?;
    Ok(BinaryRun { profile, report, history })
}

/// Put 3/4 on the best response at uniform, then send players whose best
/// response changed back to 1/2.
pub fn two_step(session: &mut OracleSession<'_>, mode: OracleMode) -> Result<BinaryRun> {
    require_binary(session)?;
    let n = session.game().players();
    let est = mode.estimator(WARMUP_BETA, WARMUP_ETA / 2.0);
    let mut profile = uniform_profile(n);
    let v = session.observe(&profile, est)?;
    let mut history = vec![RoundSnapshot::new(&profile, &v)];
    let first: Vec<usize> = (0..n).map(|i| v.best_response(i)).collect();
    for (i, &b) in first.iter().enumerate() {
        profile.set_binary(i, if b == 1 { 0.75 } else { 0.25 });
    }
    let v = session.observe(&profile, est)?;
    history.push(RoundSnapshot::new(&profile, &v));
    for (i, &b) in first.iter().enumerate() {
        if v.best_response(i) != b {
            profile.set_binary(i, 0.5);
        }
    }
    let report = RunReport::finish("two_step", json!({"oracle": estimator_json(est)}), session, 2, &profile)?;
    Ok(BinaryRun { profile, report, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{gen_linear_influence, ConstantGame, IndependentGame};

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_profile(3).binary_vec(), vec![0.5; 3]);
        let g = ConstantGame::new(4, 2, 0.3).unwrap();
        let s = OracleSession::new(&g, 0);
        let run = uniform_run(&s).unwrap();
        assert_eq!(run.report.max_regret, 0.0);
        assert_eq!(run.report.pure_queries + run.report.qm_calls, 0);
    }

    #[test]
    fn one_step_default_constants() {
        let p = OneStepParams::default();
        assert!((p.threshold - 0.085).abs() < 5e-4);
        assert!((p.shift - 0.229).abs() < 5e-4);
        // the three regret cases balance at 0.272
        let a = p.threshold;
        let d = p.shift;
        let worst = (a / 2.0 + d).max(0.5 - d).max(0.5 * (1.0 + 2.0 * d) * (2.0 * d - a));
        assert!(worst <= 0.272);
    }

    #[test]
    fn one_step_on_constant_game_stays_uniform() {
        let g = ConstantGame::new(5, 2, 0.5).unwrap();
        let mut s = OracleSession::new(&g, 0);
        let run = one_step(&mut s, OneStepParams::default(), OracleMode::Exact).unwrap();
        assert_eq!(run.profile.binary_vec(), vec![0.5; 5]);
        assert_eq!(s.qm_calls(), 1);
    }

    #[test]
    fn one_step_moves_toward_best_response() {
        let g = IndependentGame::new(vec![vec![0.2, 0.8], vec![0.9, 0.1], vec![0.5, 0.52]]).unwrap();
        let mut s = OracleSession::new(&g, 0);
        let run = one_step(&mut s, OneStepParams::default(), OracleMode::Exact).unwrap();
        let d = OneStepParams::default().shift;
        assert_eq!(run.profile.binary_vec(), vec![0.5 + d, 0.5 - d, 0.5]);
    }

    #[test]
    fn two_step_on_constant_game_uses_tie_break() {
        let g = ConstantGame::new(3, 2, 0.6).unwrap();
        let mut s = OracleSession::new(&g, 0);
        let run = two_step(&mut s, OracleMode::Exact).unwrap();
        // ties resolve to action 0, which ends with mass 3/4
        assert_eq!(run.profile.binary_vec(), vec![0.25; 3]);
        assert_eq!(run.report.max_regret, 0.0);
        assert_eq!(s.qm_calls(), 2);
    }

    #[test]
    fn two_step_large_discrepancy_never_flips() {
        for seed in 0..20 {
            let g = gen_linear_influence(30, 2, 1.0, seed).unwrap();
            let mut s = OracleSession::new(&g, seed);
            let run = two_step(&mut s, OracleMode::Exact).unwrap();
            let (first, second) = (&run.history[0], &run.history[1]);
            for i in 0..30 {
                let d = first.v1[i] - first.v0[i];
                if d.abs() > 0.5 {
                    let d2 = second.v1[i] - second.v0[i];
                    assert!(d * d2 > 0.0, "seed {seed} player {i}");
                }
            }
        }
    }

    #[test]
    fn warmups_meet_bounds_on_small_sample() {
        for seed in 0..10 {
            let g = gen_linear_influence(50, 2, 1.0, seed).unwrap();
            let mut s = OracleSession::new(&g, seed);
            let r1 = one_step(&mut s, OneStepParams::default(), OracleMode::Exact).unwrap();
            assert!(r1.report.max_regret <= 0.272 + 1e-9);
            let r2 = two_step(&mut s, OracleMode::Exact).unwrap();
            assert!(r2.report.max_regret <= 0.25 + 1e-9);
        }
    }
}
