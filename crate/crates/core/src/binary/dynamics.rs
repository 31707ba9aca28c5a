//! Round-based dynamics that steer every player's state into a band around a
//! target surface and keep it there.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::plane::{largeness_regret_bound, surface_band, target, UNParams};
use super::{estimator_json, require_binary, BinaryRun, OracleMode, RoundSnapshot};
use crate::error::{arg, Result};
use crate::game::{MixedProfile, PayoffTable};
use crate::oracle::{Estimator, OracleSession};
use crate::report::RunReport;
use crate::verify::StrategyPayoffState;

/// Estimated regret at or above which a player counts as bad.
pub const BAD_REGRET: f64 = 0.12;
/// Total displacement of bad players in the repair phase.
pub const REPAIR_SHIFT: f64 = 0.15;
/// Total displacement of bad players in the final phase.
pub const FINAL_SHIFT: f64 = 1.0 / 220.0;
/// `1/8 - 1/220`.
pub const COMMUNICATION_BOUND: f64 = 137.0 / 1100.0;

const LABEL_TOL: f64 = 1e-12;

/// One step of the band-tracking rule for a single player.
#[derive(Clone, Copy, Debug)]
struct Tracker {
    c: f64,
    band: f64,
    step: f64,
}

impl Tracker {
    fn next(&self, p: f64, v1: f64, v0: f64, prev_v1: f64, prev_v0: f64) -> f64 {
        let t = target(self.c, v1, v0);
        let r = p - t;
        let q = if r < -self.band {
            p + self.step
        } else if r > self.band {
            p - self.step
        } else if t <= 0.0 || t >= 1.0 {
            // saturated target: settle on it
            if p < t {
                (p + self.step).min(t)
            } else {
                (p - self.step).max(t)
            }
        } else {
            p + t - target(self.c, prev_v1, prev_v0)
        };
        q.clamp(0.0, 1.0)
    }

    /// Applies one simultaneous update computed from `v` and `prev`.
    fn apply(&self, profile: &mut MixedProfile, v: &PayoffTable, prev: &PayoffTable, movers: impl Fn(usize) -> bool) {
        let next: Vec<f64> = (0..profile.players())
            .map(|i| {
                let p = profile.binary(i);
                if movers(i) {
                    self.next(p, v.get(i, 1), v.get(i, 0), prev.get(i, 1), prev.get(i, 0))
                } else {
                    p
                }
            })
            .collect();
        for (i, p) in next.into_iter().enumerate() {
            profile.set_binary(i, p);
        }
    }
}

struct Tracked {
    profile: MixedProfile,
    last: PayoffTable,
    history: Vec<RoundSnapshot>,
    rounds: u64,
}

/// Initial observation at uniform followed by `rounds` observe-and-update rounds.
fn run_tracking(session: &mut OracleSession<'_>, est: Estimator, tracker: Tracker, rounds: usize) -> Result<Tracked> {
    let n = session.game().players();
    let mut profile = MixedProfile::uniform(n, 2);
    let mut prev = session.observe(&profile, est)?;
    let mut history = vec![RoundSnapshot::new(&profile, &prev)];
    for _ in 0..rounds {
        let v = session.observe(&profile, est)?;
        history.push(RoundSnapshot::new(&profile, &v));
        tracker.apply(&mut profile, &v, &prev, |_| true);
        prev = v;
    }
    Ok(Tracked { profile, last: prev, history, rounds: rounds as u64 })
}

fn un_estimator(params: &UNParams, mode: OracleMode) -> Estimator {
    mode.estimator(params.step(), params.per_call_delta())
}

fn un_tracked(session: &mut OracleSession<'_>, params: &UNParams, mode: OracleMode) -> Result<(Tracked, Tracker)> {
    require_binary(session)?;
    let tracker = Tracker { c: 1.0, band: params.band(), step: params.step() };
    let tracked = run_tracking(session, un_estimator(params, mode), tracker, params.rounds())?;
    Ok((tracked, tracker))
}

fn un_json(params: &UNParams, est: Estimator) -> serde_json::Value {
    json!({
        "alpha": params.alpha,
        "eta": params.eta,
        "lambda": params.lambda(),
        "step": params.step(),
        "rounds": params.rounds(),
        "oracle": estimator_json(est),
    })
}

/// Completely uncoupled dynamic reaching regret `1/8 + alpha`.
pub fn un(session: &mut OracleSession<'_>, params: UNParams, mode: OracleMode) -> Result<BinaryRun> {
    let (t, _) = un_tracked(session, &params, mode)?;
    let est = un_estimator(&params, mode);
    let report = RunReport::finish("un", un_json(&params, est), session, t.rounds, &t.profile)?;
    Ok(BinaryRun { profile: t.profile, report, history: t.history })
}

/// Which players count as bad, from estimated states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadGoodLabeling {
    pub bad: Vec<bool>,
    pub theta: f64,
}

impl BadGoodLabeling {
    pub fn from_states(states: &[StrategyPayoffState]) -> Self {
        let bad: Vec<bool> = states.iter().map(|s| s.regret() >= BAD_REGRET - LABEL_TOL).collect();
        let theta = if bad.is_empty() {
            0.0
        } else {
            bad.iter().filter(|&&b| b).count() as f64 / bad.len() as f64
        };
        BadGoodLabeling { bad, theta }
    }

    pub fn from_observation(profile: &MixedProfile, v: &PayoffTable) -> Self {
        let states: Vec<StrategyPayoffState> = (0..profile.players())
            .map(|i| StrategyPayoffState::new(v.get(i, 1), v.get(i, 0), profile.binary(i)))
            .collect();
        Self::from_states(&states)
    }

    pub fn bad_count(&self) -> usize {
        self.bad.iter().filter(|&&b| b).count()
    }

    /// The single broadcast bit.
    pub fn majority_bad(&self) -> bool {
        self.theta > 0.5
    }
}

/// Moves each bad player toward its estimated best response by
/// `min(step, budget - moved)`.
fn shift_bad(profile: &mut MixedProfile, v: &PayoffTable, bad: &[bool], moved: &mut [f64], step: f64, budget: f64) {
    for i in 0..profile.players() {
        if !bad[i] {
            continue;
        }
        let d = step.min(budget - moved[i]).max(0.0);
        moved[i] += d;
        let p = profile.binary(i);
        let dir = if v.get(i, 1) >= v.get(i, 0) { 1.0 } else { -1.0 };
        profile.set_binary(i, p + dir * d);
    }
}

/// Uncoupled dynamic followed by one broadcast bit and two repair phases,
/// reaching regret `137/1100 + alpha` on games with `c <= 1`.
pub fn communication_dynamic(session: &mut OracleSession<'_>, params: UNParams, mode: OracleMode) -> Result<BinaryRun> {
    let (t, tracker) = un_tracked(session, &params, mode)?;
    let est = un_estimator(&params, mode);
    let step = params.step();
    let Tracked { mut profile, mut history, mut rounds, last: mut prev } = t;

    let mut v = session.observe(&profile, est)?;
    history.push(RoundSnapshot::new(&profile, &v));
    let first = BadGoodLabeling::from_observation(&profile, &v);
    let mut labels = first.clone();
    let repair_rounds = (REPAIR_SHIFT / step).ceil() as usize;
    let n = profile.players();

    if first.majority_bad() {
        let mut moved = vec![0.0; n];
        for r in 0..repair_rounds {
            if r > 0 {
                v = session.observe(&profile, est)?;
                history.push(RoundSnapshot::new(&profile, &v));
            }
            let before = profile.clone();
            tracker.apply(&mut profile, &v, &prev, |i| !first.bad[i]);
            let mut shifted = before;
            shift_bad(&mut shifted, &v, &first.bad, &mut moved, step, REPAIR_SHIFT);
            for i in (0..n).filter(|&i| first.bad[i]) {
                profile.set_binary(i, shifted.binary(i));
            }
            prev = v.clone();
            rounds += 1;
        }
        v = session.observe(&profile, est)?;
        history.push(RoundSnapshot::new(&profile, &v));
        labels = BadGoodLabeling::from_observation(&profile, &v);
    }

    let final_rounds = (FINAL_SHIFT / step).ceil() as usize;
    if labels.bad_count() > 0 {
        let mut moved = vec![0.0; n];
        for r in 0..final_rounds {
            if r > 0 {
                v = session.observe(&profile, est)?;
                history.push(RoundSnapshot::new(&profile, &v));
            }
            shift_bad(&mut profile, &v, &labels.bad, &mut moved, step, FINAL_SHIFT);
            rounds += 1;
        }
    }

    let mut p = un_json(&params, est);
    p["theta"] = json!(first.theta);
    p["bad_after_dynamic"] = json!(first.bad_count());
    p["bad_final_phase"] = json!(labels.bad_count());
    let report = RunReport::finish("communication", p, session, rounds, &profile)?;
    Ok(BinaryRun { profile, report, history })
}

/// Discretised dynamic for largeness `c`, targeting
/// `p* = min(1/2 + D/(2c), 1)`. Regret at most `c/8 + alpha` for `c <= 2` and
/// `1/2 - 1/(2c) + alpha` otherwise.
pub fn ucn_gamma_discrete(
    session: &mut OracleSession<'_>,
    alpha: f64,
    eta: f64,
    c: f64,
    mode: OracleMode,
) -> Result<BinaryRun> {
    require_binary(session)?;
    if !(eta > 0.0 && eta < 1.0) {
        return arg(format!("eta = {eta} must lie in (0, 1)"));
    }
    let width = surface_band(c, alpha)?;
    let step = width / 4.0;
    let rounds = (2.0 / step).ceil() as usize;
    let est = mode.estimator(step, eta / rounds as f64);
    let tracker = Tracker { c, band: step, step };
    let t = run_tracking(session, est, tracker, rounds)?;
    let report = RunReport::finish(
        "ucn_gamma",
        json!({
            "alpha": alpha,
            "eta": eta,
            "c": c,
            "band": width,
            "step": step,
            "rounds": rounds,
            "bound": largeness_regret_bound(c) + alpha,
            "oracle": estimator_json(est),
        }),
        session,
        t.rounds,
        &t.profile,
    )?;
    Ok(BinaryRun { profile: t.profile, report, history: t.history })
}
