//! Fixed-step integration of the continuous plane dynamics.
//!
//! Every player starts at 1/2. At each step the exact payoffs are computed,
//! the payoff derivative is approximated by the backward difference over the
//! last step, and each player moves at unit speed toward the target surface
//! until it is within the tolerance band, after which it follows the target and
//! spends any remaining speed on closing the gap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::binary::plane::target;
use crate::error::{arg, Result};
use crate::exec::Parallelism;
use crate::game::{expected_table, Game, MixedProfile, PayoffTable};
use crate::verify::StrategyPayoffState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub states: Vec<StrategyPayoffState>,
    /// Signed distance to the target surface, per player.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub step: f64,
    pub c: f64,
    /// Tolerance band on `|residual|`.
    pub band: f64,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn players(&self) -> usize {
        self.points.first().map_or(0, |p| p.states.len())
    }

    /// First time the player's residual is inside the band.
    pub fn first_entry(&self, player: usize) -> Option<f64> {
        self.points
            .iter()
            .find(|pt| pt.residuals[player].abs() <= self.band)
            .map(|pt| pt.t)
    }

    /// Whether the player stays inside the band for every recorded `t >= from`.
    pub fn stays_from(&self, player: usize, from: f64) -> bool {
        self.points
            .iter()
            .filter(|pt| pt.t >= from)
            .all(|pt| pt.residuals[player].abs() <= self.band)
    }

    /// Every player enters by `reach_by` and never leaves after its first entry.
    pub fn reach_and_stay(&self, reach_by: f64) -> bool {
        (0..self.players()).all(|i| match self.first_entry(i) {
            Some(t) => t <= reach_by && self.stays_from(i, t),
            None => false,
        })
    }

    /// Largest `|p(t + h) - p(t)|` over all players and steps.
    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .flat_map(|w| w[0].states.iter().zip(&w[1].states).map(|(a, b)| (b.p - a.p).abs()))
            .fold(0.0, f64::max)
    }

    pub fn final_profile(&self) -> Result<MixedProfile> {
        let last = self.points.last().ok_or_else(|| crate::Error::Argument("empty trajectory".into()))?;
        MixedProfile::from_binary(&last.states.iter().map(|s| s.p).collect::<Vec<_>>())
    }

    /// CSV with columns `t,player,v1,v0,p,d`, keeping every `downsample`-th
    /// step plus the last one.
    pub fn write_csv<W: Write>(&self, mut w: W, downsample: usize) -> Result<()> {
        let every = downsample.max(1);
        writeln!(w, "t,player,v1,v0,p,d")?;
        let last = self.points.len().saturating_sub(1);
        for (m, pt) in self.points.iter().enumerate() {
            if m % every != 0 && m != last {
                continue;
            }
            for (i, (s, d)) in pt.states.iter().zip(&pt.residuals).enumerate() {
                writeln!(w, "{},{},{},{},{},{}", pt.t, i, s.v1, s.v0, s.p, d)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Residual {
    /// `s . n - 1/2`.
    Plane,
    /// `p* - min(1/2 + D/(2c), 1)`.
    Surface,
}

/// Plane dynamic (`c = 1`) with band `2h`.
pub fn simulate_ucn<G: Game + ?Sized>(game: &G, step_h: f64, horizon: f64) -> Result<Trajectory> {
    simulate(game, 1.0, step_h, horizon, 2.0 * step_h, Residual::Plane, Parallelism::default())
}

/// Surface dynamic for largeness `c` with band `2h max(1, 1/(2c))`.
pub fn simulate_ucn_gamma<G: Game + ?Sized>(game: &G, c: f64, step_h: f64, horizon: f64) -> Result<Trajectory> {
    simulate_ucn_gamma_with(game, c, step_h, horizon, Parallelism::default())
}

pub fn simulate_ucn_gamma_with<G: Game + ?Sized>(
    game: &G,
    c: f64,
    step_h: f64,
    horizon: f64,
    exec: Parallelism,
) -> Result<Trajectory> {
    if !(c > 0.0 && c.is_finite()) {
        return arg(format!("c = {c} must be positive"));
    }
    let band = 2.0 * step_h * (1.0f64).max(1.0 / (2.0 * c));
    simulate(game, c, step_h, horizon, band, Residual::Surface, exec)
}

pub fn simulate_ucn_with<G: Game + ?Sized>(game: &G, step_h: f64, horizon: f64, exec: Parallelism) -> Result<Trajectory> {
    simulate(game, 1.0, step_h, horizon, 2.0 * step_h, Residual::Plane, exec)
}

fn residual(kind: Residual, c: f64, s: &StrategyPayoffState) -> f64 {
    match kind {
        Residual::Plane => s.p - target(1.0, s.v1, s.v0),
        Residual::Surface => s.best_response_mass() - (0.5 + s.discrepancy() / (2.0 * c)).min(1.0),
    }
}

fn simulate<G: Game + ?Sized>(
    game: &G,
    c: f64,
    h: f64,
    horizon: f64,
    band: f64,
    kind: Residual,
    exec: Parallelism,
) -> Result<Trajectory> {
    if game.actions() != 2 {
        return arg("continuous dynamics need a two-action game");
    }
    if !(h > 0.0 && h < 1.0) {
        return arg(format!("step = {h} must lie in (0, 1)"));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return arg(format!("horizon = {horizon} must be finite and nonnegative"));
    }
    let n = game.players();
    let steps = (horizon / h).round() as usize;
    let mut profile = MixedProfile::uniform(n, 2);
    let mut prev: Option<PayoffTable> = None;
    let mut points = Vec::with_capacity(steps + 1);
    for m in 0..=steps {
        let v = expected_table(game, &profile, exec)?;
        let states: Vec<StrategyPayoffState> = (0..n)
            .map(|i| StrategyPayoffState::new(v.get(i, 1), v.get(i, 0), profile.binary(i)))
            .collect();
        let residuals = states.iter().map(|s| residual(kind, c, s)).collect();
        points.push(TrajectoryPoint { t: m as f64 * h, states, residuals });
        if m == steps {
            break;
        }
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let p = profile.binary(i);
                let (v1, v0) = (v.get(i, 1), v.get(i, 0));
                let t = target(c, v1, v0);
                let r = p - t;
                let q = if r < -band {
                    p + h
                } else if r > band {
                    p - h
                } else if t <= 0.0 || t >= 1.0 {
                    if p < t {
                        (p + h).min(t)
                    } else {
                        (p - h).max(t)
                    }
                } else {
                    let dt = match &prev {
                        Some(pv) => t - target(c, pv.get(i, 1), pv.get(i, 0)),
                        None => 0.0,
                    };
                    // follow the target, spending leftover speed on closing the gap
                    let dt = dt.clamp(-h, h);
                    let spare = h - dt.abs();
                    p + dt + (-r).clamp(-spare, spare)
                };
                q.clamp(0.0, 1.0)
            })
            .collect();
        for (i, p) in next.into_iter().enumerate() {
            profile.set_binary(i, p);
        }
        prev = Some(v);
    }
    Ok(Trajectory { step: h, c, band, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{gen_linear_influence, ConstantGame, IndependentGame};
    use crate::verify::regret_report;

    #[test]
    fn constant_game_starts_on_plane() {
        let g = ConstantGame::new(4, 2, 0.5).unwrap();
        let tr = simulate_ucn(&g, 1e-2, 0.2).unwrap();
        assert!((0..4).all(|i| tr.first_entry(i) == Some(0.0)));
        assert!(tr.reach_and_stay(0.0));
    }

    #[test]
    fn independent_player_enters_at_known_time() {
        let g = IndependentGame::symmetric(2, vec![0.3, 0.7]).unwrap();
        let h = 1e-3;
        let tr = simulate_ucn(&g, h, 0.5).unwrap();
        // distance 0.2 at unit speed, entering the 2h band slightly early
        let t = tr.first_entry(0).unwrap();
        assert!(t <= 0.2 + 1e-9 && t >= 0.2 - 3.0 * h, "{t}");
        let last = tr.points.last().unwrap();
        assert!((last.states[0].p - 0.7).abs() <= 2.0 * h);
    }

    #[test]
    fn linear_influence_reaches_and_stays() {
        let h = 1e-3;
        for seed in 0..3 {
            let g = gen_linear_influence(20, 2, 1.0, seed).unwrap();
            let tr = simulate_ucn(&g, h, 1.0).unwrap();
            assert!(tr.reach_and_stay(0.5 + 2.0 * h), "seed {seed}");
            assert!(tr.max_step() <= h + 1e-15);
        }
    }

    #[test]
    fn gamma_at_c1_matches_plane_dynamic() {
        let g = gen_linear_influence(10, 2, 1.0, 4).unwrap();
        let a = simulate_ucn(&g, 1e-2, 0.8).unwrap();
        let b = simulate_ucn_gamma(&g, 1.0, 1e-2, 0.8).unwrap();
        for (x, y) in a.points.iter().zip(&b.points) {
            for i in 0..10 {
                assert!((x.states[i].p - y.states[i].p).abs() < 1e-12);
                assert!((x.residuals[i].abs() - y.residuals[i].abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_target_goes_pure() {
        let g = IndependentGame::symmetric(3, vec![0.05, 0.95]).unwrap().with_largeness(0.75);
        let tr = simulate_ucn_gamma(&g, 0.25, 1e-3, 1.0).unwrap();
        let last = tr.points.last().unwrap();
        assert!(last.states.iter().all(|s| s.p == 1.0));
    }

    #[test]
    fn gamma_terminal_regret_small() {
        let h = 1e-3;
        for c in [0.5, 1.0, 2.0] {
            for seed in 0..3 {
                let g = gen_linear_influence(20, 2, c, seed).unwrap();
                let tr = simulate_ucn_gamma(&g, c, h, 1.0).unwrap();
                let rep = regret_report(&g, &tr.final_profile().unwrap()).unwrap();
                assert!(rep.max_regret <= c / 8.0 + 10.0 * h, "c={c} seed={seed}");
            }
        }
    }

    #[test]
    fn induced_payoff_speed_is_bounded() {
        let h = 1e-3;
        let c = 2.0;
        let g = gen_linear_influence(20, 2, c, 1).unwrap();
        let tr = simulate_ucn_gamma(&g, c, h, 1.0).unwrap();
        for w in tr.points.windows(2) {
            for (a, b) in w[0].states.iter().zip(&w[1].states) {
                assert!((b.v1 - a.v1).abs() <= c * h * (1.0 + 1e-9));
                let dd = (b.discrepancy() - a.discrepancy()).abs();
                assert!(dd <= 2.0 * c * h * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn csv_downsampling() {
        let g = ConstantGame::new(2, 2, 0.5).unwrap();
        let tr = simulate_ucn(&g, 0.1, 1.0).unwrap();
        let mut out = Vec::new();
        tr.write_csv(&mut out, 4).unwrap();
        let text = String::from_utf8(out).unwrap();
        // steps 0, 4, 8 and the last (10), two players each
        assert_eq!(text.lines().count(), 1 + 4 * 2);
        assert!(text.starts_with("t,player,v1,v0,p,d\n0,0,0.5,0.5,0.5,0\n"));
    }
}
