//! Torque decomposition and spasticity metrics.
//!
//! The recorded robot torque is the joint's total stretch resistance. Over
//! the constant-velocity part of the ramp the inertial share vanishes and
//! the viscous share is small, so the reflex torque is estimated as the
//! total minus the elastic torque measured in a slow reflex-free baseline.

use alloc::vec::Vec;

use crate::engine::TrialRecord;
use crate::reflex::{ModelClass, ReflexParams};
use crate::{Error, Result};

/// Fraction of the ramp treated as constant velocity (the middle 80%).
pub const WINDOW_FRACTION: f64 = 0.8;
/// Default spacing of the analysis grid, rad.
pub const GRID_SPACING: f64 = core::f64::consts::PI / 180.0;
/// Catch-angle detector: absolute floor, N m.
pub const CATCH_FLOOR: f64 = 0.5;
/// Catch-angle detector: fraction of peak.
pub const CATCH_PEAK_FRACTION: f64 = 0.05;
/// Catch-angle detector: required persistence, rad.
pub const CATCH_PERSISTENCE: f64 = 5.0 * core::f64::consts::PI / 180.0;
/// Half-width of the parabola fitted around the maximum to place the peak, rad.
pub const PEAK_FIT_HALF_WIDTH: f64 = 5.0 * core::f64::consts::PI / 180.0;

const ANGLE_EPS: f64 = 1e-9;

/// Torque sampled on an ascending angle grid (rad, N m).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profile {
    pub theta: Vec<f64>,
    pub torque: Vec<f64>,
}

impl Profile {
    pub fn new(theta: Vec<f64>, torque: Vec<f64>) -> Result<Self> {
        if theta.len() != torque.len() {
            return Err(Error::InvalidParameter {
                name: "profile",
                reason: "angle and torque columns differ in length",
            });
        }
        if theta.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                name: "profile",
                reason: "angles must be strictly increasing",
            });
        }
        if theta.iter().chain(&torque).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("profile"));
        }
        Ok(Profile { theta, torque })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        Some((*self.theta.first()?, *self.theta.last()?))
    }

    /// Linear interpolation; `None` outside the support.
    pub fn interpolate(&self, theta: f64) -> Option<f64> {
        let (lo, hi) = self.support()?;
        if theta < lo - ANGLE_EPS || theta > hi + ANGLE_EPS {
            return None;
        }
        let i = self.theta.partition_point(|&x| x < theta);
        if self.theta.get(i) == Some(&theta) {
            return Some(self.torque[i]);
        }
        if i == 0 {
            return Some(self.torque[0]);
        }
        if i >= self.len() {
            return self.torque.last().copied();
        }
        let (x0, x1) = (self.theta[i - 1], self.theta[i]);
        let (y0, y1) = (self.torque[i - 1], self.torque[i]);
        Some(y0 + (y1 - y0) * (theta - x0) / (x1 - x0))
    }

    /// `(angle, torque)` of the maximum torque; first occurrence wins.
    pub fn peak(&self) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for (&th, &t) in self.theta.iter().zip(&self.torque) {
            if best.is_none_or(|(_, b)| t > b) {
                best = Some((th, t));
            }
        }
        best
    }
}

/// Uniform angle grid from `start` to `end` inclusive.
pub fn uniform_grid(start: f64, end: f64, spacing: f64) -> Vec<f64> {
    let n = libm::floor((end - start) / spacing + 1e-6) as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| start + k as f64 * spacing).collect();
    if let Some(last) = g.last_mut() {
        if (*last - end).abs() < 1e-6 * spacing {
            *last = end;
        }
    }
    g
}

/// Resamples scattered `(θ, y)` samples onto `nodes`.
///
/// Each node takes the value of a least-squares line through the samples
/// within half a grid spacing of it. Nodes whose bin is empty are filled by
/// linear interpolation between neighbouring filled nodes. Any node outside
/// `[min θ, max θ]` of the samples is an error.
pub fn resample(theta: &[f64], y: &[f64], nodes: &[f64], spacing: f64) -> Result<Vec<f64>> {
    let mut pts: Vec<(f64, f64)> = theta
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyWindow);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (min, max) = (pts[0].0, pts[pts.len() - 1].0);

    let half = 0.5 * spacing;
    let mut vals: Vec<Option<f64>> = Vec::with_capacity(nodes.len());
    for &node in nodes {
        if node < min - ANGLE_EPS || node > max + ANGLE_EPS {
            return Err(Error::OutsideSupport { theta: node, min, max });
        }
        let lo = pts.partition_point(|p| p.0 < node - half);
        let hi = pts.partition_point(|p| p.0 < node + half);
        vals.push(local_line(&pts[lo..hi], node));
    }

    let filled: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].is_some()).collect();
    if filled.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut out = Vec::with_capacity(nodes.len());
    for (i, &node) in nodes.iter().enumerate() {
        if let Some(v) = vals[i] {
            out.push(v);
            continue;
        }
        let right = filled.partition_point(|&j| j < i);
        let v = match (right.checked_sub(1).map(|k| filled[k]), filled.get(right).copied()) {
            (Some(l), Some(r)) => {
                let (x0, x1) = (nodes[l], nodes[r]);
                let (y0, y1) = (vals[l].unwrap_or(0.0), vals[r].unwrap_or(0.0));
                y0 + (y1 - y0) * (node - x0) / (x1 - x0)
            }
            (Some(l), None) => vals[l].unwrap_or(0.0),
            (None, Some(r)) => vals[r].unwrap_or(0.0),
            (None, None) => unreachable!(),
        };
        out.push(v);
    }
    Ok(out)
}

fn local_line(pts: &[(f64, f64)], at: f64) -> Option<f64> {
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0 - at).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - at - mx) * (p.0 - at - mx)).sum();
    if sxx <= 1e-18 {
        return Some(my);
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - at - mx) * (p.1 - my)).sum();
    Some(my - (sxy / sxx) * mx)
}

/// Passive elastic torque versus angle, resistance positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveCurve {
    pub profile: Profile,
    pub spacing: f64,
}

impl PassiveCurve {
    pub fn value(&self, theta: f64) -> Option<f64> {
        self.profile.interpolate(theta)
    }
}

/// Builds the passive curve from a reflex-free baseline trial.
///
/// Samples from the ramp onset to the end of the record are binned by angle,
/// so the hold phase pins the value at full extension.
pub fn estimate_passive_curve(baseline: &TrialRecord, spacing: f64) -> Result<PassiveCurve> {
    if baseline.has_reflex() {
        return Err(Error::BaselineHasReflex);
    }
    let rows = usable_rows(baseline, baseline.profile.t_start, f64::INFINITY);
    if rows.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let p = &baseline.profile;
    let nodes = uniform_grid(p.theta_init, p.theta_final, spacing);
    let torque = resample(&baseline.theta[rows.clone()], &baseline.torque_robot[rows], &nodes, spacing)?;
    Ok(PassiveCurve {
        profile: Profile::new(nodes, torque)?,
        spacing,
    })
}

/// Rows within `[t0, t1]`, cut before any diverged row.
fn usable_rows(trial: &TrialRecord, t0: f64, t1: f64) -> core::ops::Range<usize> {
    let mut r = trial.rows_between(t0, t1);
    if let Some(d) = trial.divergence {
        let cut = trial.t.partition_point(|&t| t < d.t - 1e-12);
        r.end = r.end.min(cut);
        r.start = r.start.min(r.end);
    }
    r
}

/// Classifies reflex parameters into a model family.
pub fn classify(p: &ReflexParams) -> Option<ModelClass> {
    let (l, v, f) = (p.gain_length > 0.0, p.gain_velocity > 0.0, p.gain_force > 0.0);
    match (l, v, f) {
        (true, false, false) => Some(ModelClass::Length),
        (false, true, false) => Some(ModelClass::Velocity),
        (false, false, true) => Some(ModelClass::Force),
        (true, true, false) => Some(ModelClass::Hybrid),
        _ => None,
    }
}

/// Reflex torque versus angle over a trial's constant-velocity window.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflexTorqueCurve {
    pub profile: Profile,
    /// Stretch velocity of the source trial, rad/s.
    pub velocity: f64,
    pub model: Option<ModelClass>,
    pub params: ReflexParams,
    pub saturated: bool,
    /// The source trial diverged and the curve stops at the divergence.
    pub truncated: bool,
}

/// Window nodes of `trial` on the passive grid.
fn window_nodes(trial: &TrialRecord, passive: &PassiveCurve) -> Result<(core::ops::Range<usize>, Vec<f64>)> {
    let (t0, t1) = trial.profile.ramp_window(WINDOW_FRACTION);
    let rows = usable_rows(trial, t0, t1);
    if rows.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let th = &trial.theta[rows.clone()];
    let lo = th.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = th.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nodes: Vec<f64> = passive
        .profile
        .theta
        .iter()
        .copied()
        .filter(|&n| n >= lo - ANGLE_EPS && n <= hi + ANGLE_EPS)
        .collect();
    if nodes.is_empty() {
        return Err(Error::EmptyWindow);
    }
    Ok((rows, nodes))
}

/// Estimates `T_s(θ) = T_total(θ) - T_e(θ)` over the constant-velocity window.
pub fn reflex_torque_curve(trial: &TrialRecord, passive: &PassiveCurve) -> Result<ReflexTorqueCurve> {
    let (rows, nodes) = window_nodes(trial, passive)?;
    let total = resample(&trial.theta[rows.clone()], &trial.torque_robot[rows], &nodes, passive.spacing)?;
    let mut torque = Vec::with_capacity(nodes.len());
    for (&n, &t) in nodes.iter().zip(&total) {
        let (min, max) = passive.profile.support().unwrap_or((0.0, 0.0));
        let e = passive
            .value(n)
            .ok_or(Error::OutsideSupport { theta: n, min, max })?;
        torque.push(t - e);
    }
    let params = trial.muscles.first().map(|m| m.reflex).unwrap_or_default();
    Ok(ReflexTorqueCurve {
        profile: Profile::new(nodes, torque)?,
        velocity: trial.profile.omega,
        model: classify(&params),
        params,
        saturated: trial.saturated(),
        truncated: trial.diverged(),
    })
}

/// The engine's own reflex torque resampled on the same nodes as
/// [`reflex_torque_curve`]; the reference the decomposition is checked against.
pub fn ground_truth_curve(trial: &TrialRecord, passive: &PassiveCurve) -> Result<Profile> {
    let (rows, nodes) = window_nodes(trial, passive)?;
    let torque = resample(&trial.theta[rows.clone()], &trial.reflex_torque[rows], &nodes, passive.spacing)?;
    Profile::new(nodes, torque)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpasticityMetrics {
    /// Degrees; `None` when the curve never clears the detector threshold.
    pub catch_angle: Option<f64>,
    pub peak_torque: f64,
    /// Degrees; vertex of [`refined_peak_angle`].
    pub peak_angle: Option<f64>,
    /// N m / deg; `None` without a catch angle.
    pub reflex_stiffness: Option<f64>,
    pub saturated: bool,
    pub diverged: bool,
}

pub fn catch_threshold(peak: f64) -> f64 {
    CATCH_FLOOR.max(CATCH_PEAK_FRACTION * peak)
}

/// Index of the first node where the torque exceeds the threshold and stays
/// above it for [`CATCH_PERSISTENCE`].
pub fn catch_index(p: &Profile, threshold: f64) -> Option<usize> {
    let n = p.len();
    'outer: for i in 0..n {
        if p.torque[i] <= threshold {
            continue;
        }
        let until = p.theta[i] + CATCH_PERSISTENCE - ANGLE_EPS;
        if p.theta[n - 1] < until {
            return None;
        }
        for j in i..n {
            if p.theta[j] > until + 2.0 * ANGLE_EPS {
                break;
            }
            if p.torque[j] <= threshold {
                continue 'outer;
            }
        }
        return Some(i);
    }
    None
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

pub fn compute_metrics(curve: &ReflexTorqueCurve) -> SpasticityMetrics {
    let p = &curve.profile;
    let (peak_theta, peak) = p.peak().unwrap_or((f64::NAN, 0.0));
    let catch = catch_index(p, catch_threshold(peak));
    let peak_idx = p.theta.iter().position(|&t| t == peak_theta);
    let stiffness = match (catch, peak_idx) {
        (Some(c), Some(k)) if k > c => {
            let x: Vec<f64> = p.theta[c..=k].iter().map(|t| t.to_degrees()).collect();
            ls_slope(&x, &p.torque[c..=k])
        }
        _ => None,
    };
    SpasticityMetrics {
        catch_angle: catch.map(|i| p.theta[i].to_degrees()),
        peak_torque: if p.is_empty() { 0.0 } else { peak },
        peak_angle: refined_peak_angle(p, PEAK_FIT_HALF_WIDTH).map(f64::to_degrees),
        reflex_stiffness: stiffness,
        saturated: curve.saturated,
        diverged: curve.truncated,
    }
}

/// Angle of the maximum at sub-grid resolution, rad.
///
/// A least-squares parabola through the nodes within `half_width` of the
/// largest sample gives the vertex, clamped to the curve's support. Near a
/// flat top the delayed reflex loop leaves a ripple of a few hundredths of
/// a N m that would otherwise decide the argmax. Without downward curvature
/// the argmax node is returned.
pub fn refined_peak_angle(p: &Profile, half_width: f64) -> Option<f64> {
    let (pt, _) = p.peak()?;
    let (lo, hi) = p.support()?;
    let mut s = [0.0f64; 5];
    let mut sy = [0.0f64; 3];
    for (&th, &y) in p.theta.iter().zip(&p.torque) {
        let x = th - pt;
        if x.abs() > half_width + ANGLE_EPS {
            continue;
        }
        let mut xp = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += xp;
            if k < 3 {
                sy[k] += xp * y;
            }
            xp *= x;
        }
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let d = det3(m);
    if s[0] < 3.0 || d.abs() < 1e-300 {
        return Some(pt);
    }
    let replace = |col: usize| {
        let mut mm = m;
        for (row, y) in mm.iter_mut().zip(sy) {
            row[col] = y;
        }
        det3(mm) / d
    };
    let (b, c) = (replace(1), replace(2));
    if !(c < 0.0) {
        return Some(pt);
    }
    Some((pt - b / (2.0 * c)).clamp(lo, hi))
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// RMSE of `a` against `b` over their shared angular support, evaluated on
/// `a`'s nodes with `b` linearly interpolated.
pub fn curve_rmse(a: &Profile, b: &Profile) -> Result<f64> {
    let (Some((a0, a1)), Some((b0, b1))) = (a.support(), b.support()) else {
        return Err(Error::DisjointSupport);
    };
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&th, &t) in a.theta.iter().zip(&a.torque) {
        if th < lo - ANGLE_EPS || th > hi + ANGLE_EPS {
            continue;
        }
        let Some(tb) = b.interpolate(th.clamp(b0, b1)) else {
            continue;
        };
        sum += (t - tb) * (t - tb);
        n += 1;
    }
    if n == 0 {
        return Err(Error::DisjointSupport);
    }
    Ok(libm::sqrt(sum / n as f64))
}

/// Summary of a curve's rise-then-plateau shape. Slopes in N m / deg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveShape {
    /// Steepest least-squares slope over any 10° sub-window.
    pub max_rise_slope: f64,
    /// Least-squares slope over the final quarter of the angular span.
    pub plateau_slope: f64,
    pub peak: f64,
    pub end_value: f64,
}

pub fn curve_shape(p: &Profile) -> Option<CurveShape> {
    let (lo, hi) = p.support()?;
    let deg: Vec<f64> = p.theta.iter().map(|t| t.to_degrees()).collect();
    let mut max_rise = f64::NEG_INFINITY;
    for i in 0..p.len() {
        let j = deg.partition_point(|&d| d <= deg[i] + 10.0 + 1e-9);
        if j - i >= 3 && deg[j - 1] - deg[i] >= 10.0 - 1e-9 {
            if let Some(s) = ls_slope(&deg[i..j], &p.torque[i..j]) {
                max_rise = max_rise.max(s);
            }
        }
    }
    let tail_start = (hi - 0.25 * (hi - lo)).to_degrees();
    let k = deg.partition_point(|&d| d < tail_start - 1e-9);
    let plateau = ls_slope(&deg[k..], &p.torque[k..])?;
    Some(CurveShape {
        max_rise_slope: max_rise,
        plateau_slope: plateau,
        peak: p.peak()?.1,
        end_value: *p.torque.last()?,
    })
}
