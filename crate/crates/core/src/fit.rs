//! Derivative-free fitting of one model family's `(G, λ)` to reference curves.
//!
//! A coarse grid seeds a coordinate descent whose step halves whenever a
//! dimension cannot be improved. Objective values are cached by parameter
//! vector, and ties resolve to the lexicographically smallest vector so the
//! result does not depend on evaluation order.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::analysis::{curve_rmse, reflex_torque_curve, PassiveCurve, Profile};
use crate::engine::{run_trial, SimConfig};
use crate::reflex::{ModelClass, ReflexParams};
use crate::{Error, Result};

/// Added to a target's peak torque to score a diverged or unusable trial.
pub const DIVERGENCE_PENALTY: f64 = 100.0;

/// A reference reflex-torque curve at one stretch velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    /// rad/s
    pub omega: f64,
    pub curve: Profile,
}

/// Search box over `[G, λ]`. Equal ends fix a dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub gain: (f64, f64),
    pub lambda: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            gain: (1.0, 3.0),
            lambda: (0.0, 0.4),
        }
    }
}

impl Bounds {
    fn lo(&self) -> [f64; 2] {
        [self.gain.0, self.lambda.0]
    }

    fn hi(&self) -> [f64; 2] {
        [self.gain.1, self.lambda.1]
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.gain, self.lambda] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter {
                    name: "bounds",
                    reason: "need finite lo <= hi",
                });
            }
        }
        if self.gain.0 < 0.0 || self.lambda.0 < 0.0 {
            return Err(Error::InvalidParameter {
                name: "bounds",
                reason: "gains and thresholds are >= 0",
            });
        }
        if self.gain.1 <= 0.0 {
            return Err(Error::NoFreeGain);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Grid points per free dimension.
    pub grid_points: usize,
    /// Descent stops once every free step is below this.
    pub min_step: f64,
    /// Budget on trial simulations (evaluations × targets).
    pub max_simulations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grid_points: 5,
            min_step: 0.01,
            max_simulations: 200,
        }
    }
}

/// Evaluates a batch of points. Implementations may run in parallel but
/// must return values in input order.
pub trait BatchEvaluator {
    fn evaluate(&self, points: &[[f64; 2]], f: &(dyn Fn([f64; 2]) -> f64 + Sync)) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl BatchEvaluator for Serial {
    fn evaluate(&self, points: &[[f64; 2]], f: &(dyn Fn([f64; 2]) -> f64 + Sync)) -> Vec<f64> {
        points.iter().map(|&p| f(p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub x: [f64; 2],
    pub value: f64,
    /// Distinct points evaluated.
    pub evaluations: usize,
}

fn key(x: [f64; 2]) -> (u64, u64) {
    (x[0].to_bits(), x[1].to_bits())
}

/// `true` if `(v, x)` beats `(bv, bx)`: lower value, ties to the smaller vector.
fn better(v: f64, x: [f64; 2], bv: f64, bx: [f64; 2]) -> bool {
    v < bv || (v == bv && (x[0], x[1]) < (bx[0], bx[1]))
}

struct Cached<'a> {
    f: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
    eval: &'a dyn BatchEvaluator,
    cache: BTreeMap<(u64, u64), f64>,
}

impl Cached<'_> {
    fn get(&mut self, points: &[[f64; 2]]) -> Vec<f64> {
        let mut fresh: Vec<[f64; 2]> = Vec::new();
        for &p in points {
            if !self.cache.contains_key(&key(p)) && !fresh.iter().any(|q| key(*q) == key(p)) {
                fresh.push(p);
            }
        }
        if !fresh.is_empty() {
            let vals = self.eval.evaluate(&fresh, self.f);
            for (p, v) in fresh.iter().zip(vals) {
                // NaN objectives sort last.
                let v = if v.is_nan() { f64::INFINITY } else { v };
                self.cache.insert(key(*p), v);
            }
        }
        points.iter().map(|p| self.cache[&key(*p)]).collect()
    }

    fn uncached(&self, points: &[[f64; 2]]) -> usize {
        let mut n = 0;
        for (i, p) in points.iter().enumerate() {
            if !self.cache.contains_key(&key(*p)) && !points[..i].iter().any(|q| key(*q) == key(*p)) {
                n += 1;
            }
        }
        n
    }
}

/// Grid-then-coordinate-descent minimisation over a 2-D box.
///
/// `cost_per_eval` is the number of simulations one evaluation consumes and
/// is charged against `opts.max_simulations`. The grid is always evaluated.
pub fn minimize(
    f: &(dyn Fn([f64; 2]) -> f64 + Sync),
    lo: [f64; 2],
    hi: [f64; 2],
    opts: &FitOptions,
    cost_per_eval: usize,
    eval: &dyn BatchEvaluator,
) -> SearchResult {
    let n = opts.grid_points.max(1);
    let axis = |d: usize| -> Vec<f64> {
        if hi[d] <= lo[d] || n == 1 {
            return alloc::vec![lo[d]];
        }
        (0..n)
            .map(|k| if k + 1 == n { hi[d] } else { lo[d] + (hi[d] - lo[d]) * k as f64 / (n - 1) as f64 })
            .collect()
    };
    let (ax0, ax1) = (axis(0), axis(1));
    let grid: Vec<[f64; 2]> = ax0
        .iter()
        .flat_map(|&a| ax1.iter().map(move |&b| [a, b]))
        .collect();

    let mut c = Cached {
        f,
        eval,
        cache: BTreeMap::new(),
    };
    let vals = c.get(&grid);
    let (mut bx, mut bv) = (grid[0], vals[0]);
    for (&x, &v) in grid.iter().zip(&vals) {
        if better(v, x, bv, bx) {
            (bx, bv) = (x, v);
        }
    }

    let mut step = [0.0; 2];
    for d in 0..2 {
        if hi[d] > lo[d] && n > 1 {
            step[d] = 0.5 * (hi[d] - lo[d]) / (n - 1) as f64;
        }
    }
    let cost = cost_per_eval.max(1);
    let active = |s: &[f64; 2]| (0..2).any(|d| s[d] > 0.0 && s[d] >= opts.min_step);
    'descent: while active(&step) {
        for d in 0..2 {
            if !(step[d] > 0.0 && step[d] >= opts.min_step) {
                continue;
            }
            let mut cand = Vec::with_capacity(2);
            for sign in [1.0, -1.0] {
                let mut x = bx;
                x[d] = (bx[d] + sign * step[d]).clamp(lo[d], hi[d]);
                if x[d] != bx[d] {
                    cand.push(x);
                }
            }
            let need = c.uncached(&cand) * cost;
            if c.cache.len() * cost + need > opts.max_simulations {
                break 'descent;
            }
            let vals = c.get(&cand);
            let mut pick: Option<([f64; 2], f64)> = None;
            for (&x, &v) in cand.iter().zip(&vals) {
                if pick.is_none_or(|(px, pv)| better(v, x, pv, px)) {
                    pick = Some((x, v));
                }
            }
            match pick {
                Some((x, v)) if v < bv => (bx, bv) = (x, v),
                _ => step[d] *= 0.5,
            }
        }
    }
    SearchResult {
        x: bx,
        value: bv,
        evaluations: c.cache.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ReflexParams,
    pub gain: f64,
    pub lambda: f64,
    /// Mean RMSE across targets, N m.
    pub objective: f64,
    pub simulations: usize,
}

/// Mean RMSE of `class` at `(G, λ)` against `targets`, with diverged or
/// unusable trials scored as [`DIVERGENCE_PENALTY`] plus the target peak.
pub fn objective(
    base: &SimConfig,
    passive: &PassiveCurve,
    targets: &[Target],
    class: ModelClass,
    x: [f64; 2],
) -> f64 {
    let params = ReflexParams::for_model(class, x[0], x[1]);
    let mut sum = 0.0;
    for t in targets {
        let penalty = DIVERGENCE_PENALTY + t.curve.peak().map_or(0.0, |p| p.1.max(0.0));
        let mut cfg = base.clone().with_reflex(params);
        cfg.profile.omega = t.omega;
        let score = run_trial(&cfg)
            .ok()
            .filter(|r| !r.diverged())
            .and_then(|r| reflex_torque_curve(&r, passive).ok())
            .and_then(|c| curve_rmse(&c.profile, &t.curve).ok())
            .unwrap_or(penalty);
        sum += score;
    }
    sum / targets.len() as f64
}

pub fn fit_parameters(
    base: &SimConfig,
    passive: &PassiveCurve,
    targets: &[Target],
    class: ModelClass,
    bounds: &Bounds,
    opts: &FitOptions,
    eval: &dyn BatchEvaluator,
) -> Result<FitResult> {
    bounds.validate()?;
    if targets.is_empty() {
        return Err(Error::NoTargets);
    }
    base.validate()?;
    let f = |x: [f64; 2]| objective(base, passive, targets, class, x);
    let r = minimize(&f, bounds.lo(), bounds.hi(), opts, targets.len(), eval);
    Ok(FitResult {
        params: ReflexParams::for_model(class, r.x[0], r.x[1]),
        gain: r.x[0],
        lambda: r.x[1],
        objective: r.value,
        simulations: r.evaluations * targets.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_argmin_when_optimum_is_a_node() {
        // 1-D: λ fixed. Minimum at G = 2.5, a grid node of [1, 3] with 5 points.
        let f = |x: [f64; 2]| (x[0] - 2.5) * (x[0] - 2.5);
        let opts = FitOptions::default();
        let r = minimize(&f, [1.0, 0.1], [3.0, 0.1], &opts, 1, &Serial);
        assert_eq!(r.x, [2.5, 0.1]);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn descent_refines_between_nodes() {
        let f = |x: [f64; 2]| (x[0] - 1.83).powi(2) + 10.0 * (x[1] - 0.27).powi(2);
        let r = minimize(&f, [1.0, 0.0], [3.0, 0.4], &FitOptions::default(), 1, &Serial);
        assert!((r.x[0] - 1.83).abs() < 0.01, "{:?}", r);
        assert!((r.x[1] - 0.27).abs() < 0.01, "{:?}", r);
        assert!(r.evaluations <= 200);
    }

    #[test]
    fn budget_is_respected() {
        let f = |x: [f64; 2]| (x[0] - 1.83).powi(2) + (x[1] - 0.27).powi(2);
        let opts = FitOptions { max_simulations: 60, ..FitOptions::default() };
        let r = minimize(&f, [1.0, 0.0], [3.0, 0.4], &opts, 2, &Serial);
        assert!(r.evaluations * 2 <= 60);
    }

    #[test]
    fn ties_go_to_smallest_vector() {
        let f = |_: [f64; 2]| 1.0;
        let r = minimize(&f, [1.0, 0.0], [3.0, 0.4], &FitOptions::default(), 1, &Serial);
        assert_eq!(r.x, [1.0, 0.0]);
    }

    #[test]
    fn nan_is_worst() {
        let f = |x: [f64; 2]| if x[0] < 2.0 { f64::NAN } else { x[0] };
        let r = minimize(&f, [1.0, 0.0], [3.0, 0.0], &FitOptions::default(), 1, &Serial);
        assert_eq!(r.x[0], 2.0);
    }

    #[test]
    fn bounds_errors() {
        let b = Bounds { gain: (0.0, 0.0), lambda: (0.1, 0.1) };
        assert!(matches!(b.validate(), Err(Error::NoFreeGain)));
        let b = Bounds { gain: (2.0, 1.0), ..Bounds::default() };
        assert!(b.validate().is_err());
    }
}
