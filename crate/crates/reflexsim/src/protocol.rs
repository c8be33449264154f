//! Batch protocol: reflex-free baseline, then every grid cell at every velocity.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use reflexsim_core::analysis::{
    compute_metrics, estimate_passive_curve, reflex_torque_curve, PassiveCurve, SpasticityMetrics, GRID_SPACING,
};
use reflexsim_core::engine::{run_trial, SimConfig, TrialRecord};
use reflexsim_core::fit::BatchEvaluator;
use reflexsim_core::reflex::{ModelClass, ReflexParams};

use crate::error::{AppError, Result};
use crate::io;

/// Stretch velocity of the passive baseline, deg/s.
pub const BASELINE_VELOCITY_DPS: f64 = 10.0;

pub fn default_velocities() -> Vec<f64> {
    (1..=9).map(|k| 10.0 * k as f64).collect()
}

/// One model family with its gain and threshold lists.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGroup {
    pub model: ModelClass,
    pub gains: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl GridGroup {
    pub fn cells(&self) -> impl Iterator<Item = ReflexParams> + '_ {
        self.gains
            .iter()
            .flat_map(move |&g| self.lambdas.iter().map(move |&l| ReflexParams::for_model(self.model, g, l)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub groups: Vec<GridGroup>,
    pub velocities_dps: Vec<f64>,
}

impl ProtocolSpec {
    /// The table-style sweep: length, velocity and force models at gains 1..3
    /// with threshold 0.1, and the hybrid model at gains 1..2 with thresholds
    /// 0.1..0.4. 153 trials over the default nine velocities.
    pub fn table1() -> Self {
        let single = |model| GridGroup {
            model,
            gains: vec![1.0, 2.0, 3.0],
            lambdas: vec![0.1],
        };
        ProtocolSpec {
            groups: vec![
                single(ModelClass::Length),
                single(ModelClass::Velocity),
                single(ModelClass::Force),
                GridGroup {
                    model: ModelClass::Hybrid,
                    gains: vec![1.0, 2.0],
                    lambdas: vec![0.1, 0.2, 0.3, 0.4],
                },
            ],
            velocities_dps: default_velocities(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        let t = Self::table1();
        let pick = |m: ModelClass| ProtocolSpec {
            groups: t.groups.iter().filter(|g| g.model == m).cloned().collect(),
            velocities_dps: t.velocities_dps.clone(),
        };
        match name {
            "table1" => Some(t.clone()),
            _ => ModelClass::parse(name.strip_prefix("table1-")?).map(pick),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.velocities_dps.is_empty() {
            return Err(AppError::Usage("velocity list is empty".into()));
        }
        if let Some(v) = self.velocities_dps.iter().find(|v| !(**v > 0.0 && **v <= 180.0)) {
            return Err(AppError::Usage(format!("velocity {v} deg/s outside (0, 180]")));
        }
        if self.groups.is_empty() {
            return Err(AppError::Usage("no model grid given".into()));
        }
        for g in &self.groups {
            if g.gains.is_empty() || g.lambdas.is_empty() {
                return Err(AppError::Usage(format!("{} grid is empty", g.model.name())));
            }
            if g.gains.iter().chain(&g.lambdas).any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(AppError::Usage(format!("{} grid has a negative or non-finite value", g.model.name())));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(ModelClass, ReflexParams)> {
        self.groups
            .iter()
            .flat_map(|g| g.cells().map(move |p| (g.model, p)))
            .collect()
    }

    pub fn trial_count(&self) -> usize {
        self.cells().len() * self.velocities_dps.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub params: ReflexParams,
    pub velocity_dps: f64,
    pub metrics: SpasticityMetrics,
}

fn row_order(a: &SummaryRow, b: &SummaryRow) -> Ordering {
    let (pa, pb) = (a.params.vector(), b.params.vector());
    pa.iter()
        .zip(&pb)
        .map(|(x, y)| x.total_cmp(y))
        .chain([a.velocity_dps.total_cmp(&b.velocity_dps), a.model.cmp(&b.model)])
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// File stem for one trial, e.g. `hybrid_g2_lam0.35_v90`.
pub fn trial_stem(model: ModelClass, p: &ReflexParams, velocity_dps: f64) -> String {
    let [gl, gv, gf, ll, lv, lf] = p.vector();
    let (g, l) = match model {
        ModelClass::Length | ModelClass::Hybrid => (gl, ll),
        ModelClass::Velocity => (gv, lv),
        ModelClass::Force => (gf, lf),
    };
    format!("{}_g{g}_lam{l}_v{velocity_dps}", model.name())
}

/// Runs the reflex-free baseline for `base` and estimates the passive curve.
pub fn baseline(base: &SimConfig) -> Result<(TrialRecord, PassiveCurve)> {
    let cfg = base
        .clone()
        .with_reflex(ReflexParams::default())
        .with_velocity_dps(BASELINE_VELOCITY_DPS);
    let rec = run_trial(&cfg)?;
    let passive = estimate_passive_curve(&rec, GRID_SPACING)?;
    Ok((rec, passive))
}

#[derive(Debug, Clone)]
pub struct ProtocolOutput {
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

/// Runs the protocol and writes, under `out_dir`:
/// `baseline.csv`, `passive_curve.csv`, `trials/<stem>.csv`,
/// `curves/<stem>.csv` and `summary.csv`.
///
/// Call inside a rayon pool to bound parallelism.
pub fn run_protocol(spec: &ProtocolSpec, base: &SimConfig, out_dir: &Path) -> Result<ProtocolOutput> {
    spec.validate()?;
    let (baseline_rec, passive) = baseline(base)?;
    io::write_trial(&baseline_rec, &out_dir.join("baseline.csv"))?;
    io::write_profile(&passive.profile, &out_dir.join("passive_curve.csv"))?;

    let jobs: Vec<(ModelClass, ReflexParams, f64)> = spec
        .cells()
        .into_iter()
        .flat_map(|(m, p)| spec.velocities_dps.iter().map(move |&v| (m, p, v)))
        .collect();
    let rows: Vec<SummaryRow> = jobs
        .par_iter()
        .map(|&(model, params, v)| -> Result<SummaryRow> {
            let cfg = base.clone().with_reflex(params).with_velocity_dps(v);
            let rec = run_trial(&cfg)?;
            let stem = trial_stem(model, &params, v);
            io::write_trial(&rec, &out_dir.join("trials").join(format!("{stem}.csv")))?;
            let metrics = match reflex_torque_curve(&rec, &passive) {
                Ok(curve) => {
                    io::write_profile(&curve.profile, &out_dir.join("curves").join(format!("{stem}.csv")))?;
                    compute_metrics(&curve)
                }
                // A trial that diverges before the analysis window has no curve.
                Err(_) if rec.diverged() => SpasticityMetrics {
                    catch_angle: None,
                    peak_torque: 0.0,
                    peak_angle: None,
                    reflex_stiffness: None,
                    saturated: rec.saturated(),
                    diverged: true,
                },
                Err(e) => return Err(e.into()),
            };
            Ok(SummaryRow {
                model: model.name().to_string(),
                params,
                velocity_dps: v,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = rows;
    summary.sort_by(row_order);
    let summary_path = out_dir.join("summary.csv");
    io::write_summary(&summary, &summary_path)?;
    Ok(ProtocolOutput { summary, summary_path })
}

/// Evaluates fit candidates on the current rayon pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonEvaluator;

impl BatchEvaluator for RayonEvaluator {
    fn evaluate(&self, points: &[[f64; 2]], f: &(dyn Fn([f64; 2]) -> f64 + Sync)) -> Vec<f64> {
        points.par_iter().map(|&p| f(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_counts() {
        let t = ProtocolSpec::table1();
        assert_eq!(t.trial_count(), 153);
        assert_eq!(ProtocolSpec::preset("table1-len").unwrap().trial_count(), 27);
        assert_eq!(ProtocolSpec::preset("table1-hybrid").unwrap().trial_count(), 72);
        assert!(ProtocolSpec::preset("nope").is_none());
    }

    #[test]
    fn hybrid_cells_tie_channels() {
        for (_, p) in ProtocolSpec::preset("table1-hybrid").unwrap().cells() {
            assert_eq!(p.gain_length, p.gain_velocity);
            assert_eq!(p.lambda_length, p.lambda_velocity);
            assert_eq!(p.gain_force, 0.0);
        }
    }

    #[test]
    fn validation() {
        let mut s = ProtocolSpec::table1();
        s.velocities_dps.clear();
        assert!(matches!(s.validate(), Err(AppError::Usage(_))));
        let mut s = ProtocolSpec::table1();
        s.velocities_dps.push(200.0);
        assert!(s.validate().is_err());
        let mut s = ProtocolSpec::table1();
        s.groups[0].gains.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn stems() {
        let p = ReflexParams::for_model(ModelClass::Hybrid, 2.0, 0.35);
        assert_eq!(trial_stem(ModelClass::Hybrid, &p, 90.0), "hybrid_g2_lam0.35_v90");
    }
}
