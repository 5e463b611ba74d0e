//! Quadrature rules for scale integrals `∫ F(t) dt/t`.
//!
//! Rules are trapezoidal in a computational variable `v` with
//! `log t = G(v)`. For the uniform rule `G(v) = v`; the graded rule keeps
//! `G' = 1` exactly on a core window and lets it rise smoothly outside,
//! so the tails are sampled more coarsely. Weights are the
//! increments `G(v_{j+1/2}) − G(v_{j−1/2})`, which makes their sum equal to
//! `log(t_max/t_min)` by telescoping.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{Error, Result};

/// Width (in `log t`) of the transitions of the graded rule.
const TRANSITION_WIDTH: f64 = 2.0;

/// Smooth step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
fn step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let f = |u: f64| (-1.0 / u).exp();
    let a = f(x);
    a / (a + f(1.0 - x))
}

const GL8_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL8_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// `∫_0^x step`. Uses `∫_0^1 step = 1/2`, which follows from
/// `step(x) + step(1 − x) = 1`.
fn step_integral(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return x - 0.5;
    }
    const PANELS: usize = 8;
    let h = x / PANELS as f64;
    let mut sum = 0.0;
    for p in 0..PANELS {
        let mid = (p as f64 + 0.5) * h;
        for (&u, &w) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
            sum += w * (step(mid - 0.5 * h * u) + step(mid + 0.5 * h * u));
        }
    }
    0.5 * h * sum
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    range: [f64; 2],
}

/// `log t = G(v)` with `G' = 1` on the core and `G' = 1 + excess` a
/// transition width beyond it.
#[derive(Debug, Clone, Copy)]
struct Grading {
    core: [f64; 2],
    excess: f64,
}

impl Grading {
    fn map(&self, v: f64) -> f64 {
        let w = TRANSITION_WIDTH;
        v + self.excess * w * (step_integral((v - self.core[1]) / w) - step_integral((self.core[0] - v) / w))
    }

    /// `v` with `map(v) = target`.
    fn invert(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (target - 1.0, target + 1.0);
        while self.map(lo) > target {
            lo -= 2.0 * (target - lo).abs().max(1.0);
        }
        while self.map(hi) < target {
            hi += 2.0 * (hi - target).abs().max(1.0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.map(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl TQuadrature {
    /// Trapezoid rule in `log t` on `[t_min, t_max]` with at least
    /// `per_octave` nodes per factor of two.
    pub fn log_uniform(t_min: f64, t_max: f64, per_octave: usize) -> Result<Self> {
        Self::build(t_min, t_max, per_octave, None)
    }

    /// `[ε, 1/ε]`, the truncated scale range.
    pub fn truncated(eps: f64, per_octave: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("truncation parameter must lie in (0, 1), got {eps}")));
        }
        Self::log_uniform(eps, 1.0 / eps, per_octave)
    }

    /// `per_octave` nodes per octave on `core`, thinning smoothly by the
    /// factor `per_octave / tail_per_octave` outside it.
    pub fn graded(t_min: f64, t_max: f64, core: [f64; 2], per_octave: usize, tail_per_octave: usize) -> Result<Self> {
        if tail_per_octave == 0 || tail_per_octave > per_octave {
            return Err(Error::Domain("tail density must be positive and at most the core density".into()));
        }
        if !(core[0] > 0.0 && core[1] > core[0]) {
            return Err(Error::Domain("core window must be a positive interval".into()));
        }
        let grading = Grading {
            core: [core[0].ln(), core[1].ln()],
            excess: per_octave as f64 / tail_per_octave as f64 - 1.0,
        };
        Self::build(t_min, t_max, per_octave, Some(grading))
    }

    fn build(t_min: f64, t_max: f64, per_octave: usize, grading: Option<Grading>) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) {
            return Err(Error::Domain(format!("invalid scale range [{t_min}, {t_max}]")));
        }
        if per_octave == 0 {
            return Err(Error::Domain("need at least one node per octave".into()));
        }
        let (l0, l1) = (t_min.ln(), t_max.ln());
        let map = |v: f64| grading.map_or(v, |g| g.map(v));
        let (v0, v1) = match grading {
            Some(g) => (g.invert(l0), g.invert(l1)),
            None => (l0, l1),
        };
        let step = LN_2 / per_octave as f64;
        let cells = ((v1 - v0) / step).ceil().max(1.0) as usize;
        let h = (v1 - v0) / cells as f64;
        let v = |j: f64| v0 + j * h;
        let mut nodes = Vec::with_capacity(cells + 1);
        let mut weights = Vec::with_capacity(cells + 1);
        for j in 0..=cells {
            let jf = j as f64;
            let (log_t, lo, hi) = if j == 0 {
                (l0, l0, map(v(0.5)))
            } else if j == cells {
                (l1, map(v(jf - 0.5)), l1)
            } else {
                (map(v(jf)), map(v(jf - 0.5)), map(v(jf + 0.5)))
            };
            nodes.push(log_t.exp());
            weights.push(hi - lo);
        }
        Ok(Self { nodes, weights, range: [t_min, t_max] })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for `dt/t`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn range(&self) -> [f64; 2] {
        self.range
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weights for `t^{power} dt/t`, e.g. `power = −2α` for `dt/t^{1+2α}`.
    pub fn weights_with_power(&self, power: f64) -> Vec<f64> {
        if power == 0.0 {
            return self.weights.clone();
        }
        self.nodes.iter().zip(&self.weights).map(|(t, w)| w * t.powf(power)).collect()
    }

    /// `Σ w_j F(t_j)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn uniform_rule_is_exact_for_constants() {
        let q = TQuadrature::log_uniform(2f64.powi(-12), 2f64.powi(12), 16).unwrap();
        assert_eq!(q.len(), 24 * 16 + 1);
        let total: f64 = q.weights().iter().sum();
        assert!((total - 24.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn graded_rule_thins_tails() {
        let q = TQuadrature::graded(1e-6, 1e6, [0.1, 10.0], 16, 4).unwrap();
        let total: f64 = q.weights().iter().sum();
        assert!((total - (1e12f64).ln()).abs() < 1e-12);
        let uniform = TQuadrature::log_uniform(1e-6, 1e6, 16).unwrap();
        assert!(q.len() < uniform.len() / 2);
        for w in q.nodes().windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn graded_rule_integrates_smooth_bumps() {
        // ∫ t^s e^{-t} dt/t = Γ(s); the core covers the bulk with margin, as the engine does.
        let q = TQuadrature::graded(1e-12, 200.0, [1e-3, 60.0], 16, 4).unwrap();
        let g = q.integrate(|t| t * t * (-t).exp());
        assert!((g - 1.0).abs() < 1e-8, "{g}");
        let g3 = q.integrate(|t| t.powf(1.5) * (-t).exp());
        assert!((g3 - 0.886226925452758).abs() < 1e-8, "{g3}");
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(TQuadrature::log_uniform(1.0, 0.5, 16).is_err());
        assert!(TQuadrature::truncated(1.5, 16).is_err());
        assert!(TQuadrature::graded(1e-3, 1e3, [1.0, 2.0], 4, 8).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_log_ratio(a in -20.0f64..0.0, span in 0.1f64..40.0, c0 in -5.0f64..5.0, c1 in 0.1f64..5.0) {
            let (t0, t1) = (a.exp(), (a + span).exp());
            let q = TQuadrature::graded(t0, t1, [c0.exp(), (c0 + c1).exp()], 16, 4).unwrap();
            let total: f64 = q.weights().iter().sum();
            prop_assert!((total - span).abs() < 1e-12 * span.max(1.0));
            prop_assert!(q.weights().iter().all(|w| *w > 0.0));
        }
    }
}
