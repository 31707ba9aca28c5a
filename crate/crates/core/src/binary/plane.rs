//! Geometry of strategy/payoff states `(v1, v0, p)` and the parameter
//! schedules derived from it.
//!
//! All coordinates use `p` = probability of action 1. The plane
//! `p = 1/2 + (v1 - v0)/2` is the set of states where the mass on the best
//! response equals `(1 + D)/2`; in these coordinates it needs no case split on
//! which action is the best response.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::oracle::binary_sample_count;
use crate::verify::StrategyPayoffState;

pub const PLANE_NORMAL: [f64; 3] = [-0.5, 0.5, 1.0];
pub const PLANE_OFFSET: f64 = 0.5;

/// Slack on band membership for exact-arithmetic rounding.
pub const BAND_TOL: f64 = 1e-12;

/// `x . n` for a raw vector `(v1, v0, p)`.
pub fn h(x: [f64; 3]) -> f64 {
    x.iter().zip(PLANE_NORMAL).map(|(a, b)| a * b).sum()
}

pub fn h_state(s: &StrategyPayoffState) -> f64 {
    h([s.v1, s.v0, s.p])
}

/// Worst regret of any state within `band` of the plane: `(1 + 2 band)^2 / 8`.
pub fn band_worst_regret(band: f64) -> f64 {
    (1.0 + 2.0 * band).powi(2) / 8.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneGeometry {
    /// Half-width of the band around the plane, measured in `s . n`.
    pub band: f64,
}

impl PlaneGeometry {
    pub fn new(band: f64) -> Self {
        PlaneGeometry { band }
    }

    pub fn normal(&self) -> [f64; 3] {
        PLANE_NORMAL
    }

    pub fn offset(&self) -> f64 {
        PLANE_OFFSET
    }

    /// `s . n - 1/2`; positive above the plane.
    pub fn residual(&self, s: &StrategyPayoffState) -> f64 {
        h_state(s) - PLANE_OFFSET
    }

    pub fn on_plane(&self, s: &StrategyPayoffState) -> bool {
        self.residual(s).abs() <= BAND_TOL
    }

    pub fn contains(&self, s: &StrategyPayoffState) -> bool {
        self.residual(s).abs() <= self.band + BAND_TOL
    }

    pub fn worst_regret(&self) -> f64 {
        band_worst_regret(self.band)
    }
}

/// Accuracy and confidence of the uncoupled dynamic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UNParams {
    pub alpha: f64,
    pub eta: f64,
}

impl UNParams {
    pub fn new(alpha: f64, eta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return arg(format!("alpha = {alpha} must lie in (0, 1)"));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return arg(format!("eta = {eta} must lie in (0, 1)"));
        }
        Ok(UNParams { alpha, eta })
    }

    /// Band half-width whose worst regret is `1/8 + alpha`.
    pub fn lambda(&self) -> f64 {
        ((1.0 + 8.0 * self.alpha).sqrt() - 1.0) / 2.0
    }

    pub fn step(&self) -> f64 {
        self.lambda() / 4.0
    }

    pub fn rounds(&self) -> usize {
        (2.0 / self.step()).ceil() as usize
    }

    /// Band the dynamic steers into.
    pub fn band(&self) -> f64 {
        self.lambda() / 4.0
    }

    pub fn bound(&self) -> f64 {
        0.125 + self.alpha
    }

    /// Per-call failure probability `eta / N`.
    pub fn per_call_delta(&self) -> f64 {
        self.eta / self.rounds() as f64
    }

    /// Pure queries of a sampled run: `(N + 1) ceil((64 / beta^3) ln(8 n N / eta))`.
    pub fn query_count(&self, n: usize, beta: Option<f64>) -> Result<u64> {
        let beta = beta.unwrap_or(self.step());
        let per = binary_sample_count(n, beta, self.per_call_delta())?;
        Ok((self.rounds() as u64 + 1) * per)
    }
}

/// Best worst-case regret on the target surface for largeness `c`:
/// `c/8` when `c <= 2`, `1/2 - 1/(2c)` otherwise.
pub fn largeness_regret_bound(c: f64) -> f64 {
    if c <= 2.0 {
        c / 8.0
    } else {
        0.5 - 0.5 / c
    }
}

/// Probability of action 1 on the target surface: `1/2 + (v1 - v0)/(2c)`
/// clipped to `[0, 1]`. With `c = 0` it is the pure best response.
pub fn target(c: f64, v1: f64, v0: f64) -> f64 {
    let d = v1 - v0;
    if c <= 0.0 {
        return if d > 0.0 {
            1.0
        } else if d < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    0.5 + (d / (2.0 * c)).clamp(-0.5, 0.5)
}

/// Worst regret over states within `w` of the target surface for largeness `c`.
pub fn surface_band_worst_regret(c: f64, w: f64) -> f64 {
    // unsaturated part: D (1 - (1/2 + D/2c - w)) for D <= min(c, 1)
    let inner = if c > 0.0 {
        let top = c.min(1.0);
        let d = (c * (0.5 + w)).clamp(0.0, top);
        d * (0.5 + w - d / (2.0 * c)).min(1.0)
    } else {
        0.0
    };
    // saturated part: p* >= 1 - w for D in [c, 1]
    let outer = if c < 1.0 { w.min(1.0) } else { 0.0 };
    inner.max(outer)
}

/// Band half-width around the target surface whose worst regret equals
/// `largeness_regret_bound(c) + alpha`.
pub fn surface_band(c: f64, alpha: f64) -> Result<f64> {
    if !(c >= 0.0 && c.is_finite()) {
        return arg(format!("c = {c} must be finite and nonnegative"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return arg(format!("alpha = {alpha} must lie in (0, 1)"));
    }
    let goal = largeness_regret_bound(c) + alpha;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if surface_band_worst_regret(c, hi) < goal {
        return arg(format!("alpha = {alpha} too large for c = {c}"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if surface_band_worst_regret(c, mid) <= goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn un_schedule_examples() {
        let p = UNParams::new(0.125, 0.1).unwrap();
        assert!((p.lambda() - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!((p.lambda() - 0.207107).abs() < 1e-6);
        assert!((p.step() - 0.051777).abs() < 1e-6);
        assert_eq!(p.rounds(), 39);
        let p = UNParams::new(0.05, 0.1).unwrap();
        assert!((p.lambda() - 0.091608).abs() < 1e-6);
        assert!((p.step() - 0.022902).abs() < 1e-6);
        assert_eq!(p.rounds(), 88);
        assert!(p.rounds() as f64 >= 8.0 / p.lambda());
        assert!(UNParams::new(0.0, 0.1).is_err());
        assert!(UNParams::new(0.1, 1.0).is_err());
    }

    #[test]
    fn lambda_band_has_target_regret() {
        for alpha in [0.01, 0.05, 0.125, 0.5] {
            let p = UNParams::new(alpha, 0.1).unwrap();
            assert!((band_worst_regret(p.lambda()) - 0.125 - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn surface_band_reduces_to_lambda_at_c1() {
        for alpha in [0.05, 0.125, 0.3] {
            let lambda = UNParams::new(alpha, 0.1).unwrap().lambda();
            assert!((surface_band(1.0, alpha).unwrap() - lambda).abs() < 1e-12);
        }
    }

    #[test]
    fn surface_target_at_c1_is_plane() {
        for (v1, v0) in [(0.9, 0.2), (0.1, 0.6), (0.4, 0.4)] {
            let s = StrategyPayoffState::new(v1, v0, target(1.0, v1, v0));
            assert!(PlaneGeometry::new(0.0).on_plane(&s));
        }
    }

    #[test]
    fn largeness_bound_cases_meet_at_two() {
        assert_eq!(largeness_regret_bound(2.0), 0.25);
        assert!((0.5 - 0.5 / 2.0 - 0.25_f64).abs() < 1e-15);
        assert_eq!(largeness_regret_bound(4.0), 0.375);
        assert_eq!(largeness_regret_bound(0.5), 0.0625);
    }

    #[test]
    fn plane_regret_examples() {
        // p* = 0.7 on the plane: D = 0.4, regret 0.12
        let s = StrategyPayoffState::new(0.7, 0.3, 0.7);
        assert!(PlaneGeometry::new(0.0).on_plane(&s));
        assert!((s.regret() - 0.12).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bounded_step(
            x in prop::array::uniform3(-1.0f64..2.0),
            w in prop::array::uniform3(-1.0f64..1.0),
            lambda in 0.0f64..1.0,
        ) {
            let w = w.map(|c| c * lambda);
            let d = h([x[0] + w[0], x[1] + w[1], x[2] + w[2]]) - h(x);
            prop_assert!(d.abs() <= 2.0 * lambda + 1e-12);
            let d0 = h([x[0] + w[0], x[1] + w[1], x[2]]) - h(x);
            prop_assert!(d0.abs() <= lambda + 1e-12);
        }

        #[test]
        fn plane_states_regret_at_most_one_eighth(v1 in 0.0f64..1.0, v0 in 0.0f64..1.0) {
            let s = StrategyPayoffState::new(v1, v0, target(1.0, v1, v0));
            prop_assert!(s.regret() <= 0.125 + 1e-15);
        }

        #[test]
        fn band_states_within_worst_regret(
            v1 in 0.0f64..1.0,
            v0 in 0.0f64..1.0,
            u in -1.0f64..1.0,
            lambda in 0.0f64..0.5,
        ) {
            let p = (target(1.0, v1, v0) + u * lambda).clamp(0.0, 1.0);
            let s = StrategyPayoffState::new(v1, v0, p);
            prop_assert!(PlaneGeometry::new(lambda).contains(&s));
            prop_assert!(s.regret() <= band_worst_regret(lambda) + 1e-12);
        }

        #[test]
        fn surface_band_states_within_bound(
            v1 in 0.0f64..1.0,
            v0 in 0.0f64..1.0,
            u in -1.0f64..1.0,
            c in 0.0f64..5.0,
            alpha in 0.01f64..0.3,
        ) {
            let w = surface_band(c, alpha).unwrap();
            let p = (target(c, v1, v0) + u * w).clamp(0.0, 1.0);
            let s = StrategyPayoffState::new(v1, v0, p);
            prop_assert!(s.regret() <= largeness_regret_bound(c) + alpha + 1e-9);
        }
    }
}
