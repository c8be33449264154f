//! Fixed-step closed-loop simulation of one stretch trial.
//!
//! Each control cycle reads the reference, runs the PID loop, feeds every
//! flexor's reflex controller with its current length/velocity and the
//! previous step's force, advances activation, sums muscle torques and
//! integrates the joint with semi-implicit Euler.

use alloc::vec::Vec;

use libm::floor;

use crate::muscle::{activation_step, HillCurves, MuscleId, MuscleParams};
use crate::plant::{angular_acceleration, JointParams, MusclePath};
use crate::reflex::{FeedbackSample, ReflexController, ReflexParams};
use crate::robot::{pid_step, PidGains, StretchProfile};
use crate::{Error, Result};

/// Angular accelerations beyond this mark a trial as diverged, rad/s².
pub const DIVERGENCE_ACCEL: f64 = 1e4;

/// One flexor: constants, path and its reflex parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleSetup {
    pub params: MuscleParams,
    pub path: MusclePath,
    pub reflex: ReflexParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub profile: StretchProfile,
    pub joint: JointParams,
    pub gains: PidGains,
    pub curves: HillCurves,
    pub muscles: Vec<MuscleSetup>,
    /// Steps per recorded row.
    pub record_decimation: usize,
}

/// Moment-arm shape ratio `a / b` used by [`SimConfig::stock`].
pub const DEFAULT_ARM_RATIO: f64 = 1.0;

impl SimConfig {
    /// The three stock flexors sharing one set of reflex parameters, with
    /// paths anchored at the profile's start angle.
    pub fn stock(profile: StretchProfile, reflex: ReflexParams) -> Result<Self> {
        let muscles = MuscleId::ALL
            .into_iter()
            .map(|id| {
                let params = MuscleParams::stock(id);
                let path = MusclePath::from_excursion(params.lr, profile.theta_init, DEFAULT_ARM_RATIO)?;
                Ok(MuscleSetup { params, path, reflex })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SimConfig {
            dt: 0.001,
            profile,
            joint: JointParams::default(),
            gains: PidGains::default(),
            curves: HillCurves::default(),
            muscles,
            record_decimation: 1,
        })
    }

    pub fn set_reflex(&mut self, reflex: ReflexParams) {
        for m in &mut self.muscles {
            m.reflex = reflex;
        }
    }

    pub fn with_reflex(mut self, reflex: ReflexParams) -> Self {
        self.set_reflex(reflex);
        self
    }

    pub fn with_velocity_dps(mut self, dps: f64) -> Self {
        self.profile.omega = dps.to_radians();
        self
    }

    /// Re-anchors every muscle path at the profile's start angle.
    pub fn reanchor_paths(&mut self, ratio: f64) -> Result<()> {
        for m in &mut self.muscles {
            m.path = MusclePath::from_excursion(m.params.lr, self.profile.theta_init, ratio)?;
        }
        Ok(())
    }

    pub fn any_reflex(&self) -> bool {
        self.muscles.iter().any(|m| m.reflex.has_reflex())
    }

    /// Number of integration steps covering the whole protocol.
    pub fn total_steps(&self) -> usize {
        floor(self.profile.duration() / self.dt + 1e-9) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be finite and > 0",
            });
        }
        if self.record_decimation == 0 {
            return Err(Error::InvalidParameter {
                name: "record_decimation",
                reason: "must be >= 1",
            });
        }
        self.profile.validate()?;
        self.joint.validate()?;
        self.gains.validate()?;
        for m in &self.muscles {
            m.params.validate()?;
            m.path.validate()?;
            m.reflex.validate()?;
            if m.reflex.has_reflex() && crate::reflex::delay_steps(m.reflex.delay, self.dt) < 1 {
                return Err(Error::InvalidParameter {
                    name: "tau",
                    reason: "reflex delay must span at least one step",
                });
            }
        }
        Ok(())
    }
}

/// Why and when a trial was stopped early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub step: usize,
    pub t: f64,
    pub accel: f64,
}

/// Per-muscle columns of a trial record.
#[derive(Debug, Clone, PartialEq)]
pub struct MuscleTrace {
    pub id: MuscleId,
    pub reflex: ReflexParams,
    pub l: Vec<f64>,
    pub v: Vec<f64>,
    pub f: Vec<f64>,
    pub e: Vec<f64>,
    pub a: Vec<f64>,
}

impl MuscleTrace {
    fn new(id: MuscleId, reflex: ReflexParams, rows: usize) -> Self {
        MuscleTrace {
            id,
            reflex,
            l: Vec::with_capacity(rows),
            v: Vec::with_capacity(rows),
            f: Vec::with_capacity(rows),
            e: Vec::with_capacity(rows),
            a: Vec::with_capacity(rows),
        }
    }
}

/// Virtual sensor log of one trial, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub dt: f64,
    pub decimation: usize,
    pub profile: StretchProfile,
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
    /// Robot drive torque, positive in the extension direction.
    pub torque_robot: Vec<f64>,
    /// Ground-truth reflex torque `Σ r_i (F_i - F_i,passive)`, resistance
    /// positive. Not part of the sensor log; kept for validation.
    pub reflex_torque: Vec<f64>,
    pub muscles: Vec<MuscleTrace>,
    pub divergence: Option<Divergence>,
}

impl TrialRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    /// Whether any muscle's excitation reached 1.
    pub fn saturated(&self) -> bool {
        self.muscles.iter().any(|m| m.e.iter().any(|&e| e >= 1.0))
    }

    pub fn has_reflex(&self) -> bool {
        self.muscles.iter().any(|m| m.reflex.has_reflex())
    }

    pub fn muscle(&self, id: MuscleId) -> Option<&MuscleTrace> {
        self.muscles.iter().find(|m| m.id == id)
    }

    /// Row indices whose time lies within `[t0, t1]`.
    pub fn rows_between(&self, t0: f64, t1: f64) -> core::ops::Range<usize> {
        let start = self.t.partition_point(|&t| t < t0 - 1e-12);
        let end = self.t.partition_point(|&t| t <= t1 + 1e-12);
        start..end.max(start)
    }
}

/// Output of one control cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOutput {
    pub accel: f64,
    pub torque_robot: f64,
    pub reflex_torque: f64,
}

#[derive(Debug, Clone)]
struct MuscleRuntime {
    setup: MuscleSetup,
    controller: ReflexController,
    activation: f64,
    prev_force: f64,
    l: f64,
    v: f64,
    f: f64,
    e: f64,
}

/// Mutable state of a running trial.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    step: usize,
    theta: f64,
    theta_dot: f64,
    integral: f64,
    muscles: Vec<MuscleRuntime>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let theta = config.profile.theta_init;
        let mut muscles = Vec::with_capacity(config.muscles.len());
        for setup in &config.muscles {
            let controller = ReflexController::new(setup.params, setup.reflex, config.dt)?;
            let l = setup.path.muscle_length(theta, setup.params.l0)?;
            let f0 = config.curves.muscle_force(0.0, l, 0.0, &setup.params)?;
            muscles.push(MuscleRuntime {
                setup: *setup,
                controller,
                activation: 0.0,
                prev_force: f0,
                l,
                v: 0.0,
                f: f0,
                e: 0.0,
            });
        }
        Ok(Simulation {
            config,
            step: 0,
            theta,
            theta_dot: 0.0,
            integral: 0.0,
            muscles,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn theta_dot(&self) -> f64 {
        self.theta_dot
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Runs the controllers at the current state. Muscle outputs are left in
    /// the runtime slots for recording; the joint is not advanced.
    fn control(&mut self) -> Result<CycleOutput> {
        let cfg = &self.config;
        let dt = cfg.dt;
        let t = self.step as f64 * dt;
        let (theta_ref, omega_ref) = cfg.profile.reference(t);
        let (torque_robot, integral) =
            pid_step(self.theta, self.theta_dot, theta_ref, omega_ref, self.integral, &cfg.gains, dt)?;
        self.integral = integral;

        let mut torque_muscle = 0.0;
        let mut reflex_torque = 0.0;
        for m in &mut self.muscles {
            let p = &m.setup.params;
            let r = m.setup.path.moment_arm(self.theta)?;
            let l = m.setup.path.muscle_length(self.theta, p.l0)?;
            let v = r * self.theta_dot;
            let sample = FeedbackSample { l, v, f: m.prev_force, t };
            let e = m.controller.step(sample, dt)?;
            m.activation = activation_step(m.activation, e, dt, p);
            let f = cfg.curves.muscle_force(m.activation, l, v, p)?;
            let f_passive = cfg.curves.muscle_force(0.0, l, v, p)?;
            torque_muscle -= r * f;
            reflex_torque += r * (f - f_passive);
            m.prev_force = f;
            m.l = l;
            m.v = v;
            m.f = f;
            m.e = e;
        }
        let accel = angular_acceleration(self.theta, self.theta_dot, torque_robot, torque_muscle, &cfg.joint);
        Ok(CycleOutput {
            accel,
            torque_robot,
            reflex_torque,
        })
    }

    fn integrate(&mut self, accel: f64) {
        self.theta_dot += accel * self.config.dt;
        self.theta += self.theta_dot * self.config.dt;
        self.step += 1;
    }

    /// One full control cycle followed by a semi-implicit Euler step.
    ///
    /// A non-finite state or an acceleration above [`DIVERGENCE_ACCEL`] is
    /// reported as [`Divergence`] and leaves the state un-advanced.
    pub fn step(&mut self) -> Result<core::result::Result<CycleOutput, Divergence>> {
        let out = self.control()?;
        if let Some(d) = self.check_divergence(&out) {
            return Ok(Err(d));
        }
        self.integrate(out.accel);
        Ok(Ok(out))
    }

    fn check_divergence(&self, out: &CycleOutput) -> Option<Divergence> {
        let finite = out.accel.is_finite()
            && out.torque_robot.is_finite()
            && self.theta.is_finite()
            && self.theta_dot.is_finite();
        if !finite || out.accel.abs() > DIVERGENCE_ACCEL {
            Some(Divergence {
                step: self.step,
                t: self.time(),
                accel: out.accel,
            })
        } else {
            None
        }
    }

    fn record_row(&self, rec: &mut TrialRecord, out: &CycleOutput) {
        rec.t.push(self.time());
        rec.theta.push(self.theta);
        rec.theta_dot.push(self.theta_dot);
        rec.torque_robot.push(out.torque_robot);
        rec.reflex_torque.push(out.reflex_torque);
        for (trace, m) in rec.muscles.iter_mut().zip(&self.muscles) {
            trace.l.push(m.l);
            trace.v.push(m.v);
            trace.f.push(m.f);
            trace.e.push(m.e);
            trace.a.push(m.activation);
        }
    }
}

/// Runs start, ramp and hold phases and returns the full record.
///
/// Configuration errors are returned as `Err`. Numerical divergence is not an
/// error: the record stops at the diverging row and carries the flag.
pub fn run_trial(config: &SimConfig) -> Result<TrialRecord> {
    let mut sim = Simulation::new(config.clone())?;
    let n_steps = config.total_steps();
    let dec = config.record_decimation;
    let rows = n_steps / dec + 1;
    let mut rec = TrialRecord {
        dt: config.dt,
        decimation: dec,
        profile: config.profile,
        t: Vec::with_capacity(rows),
        theta: Vec::with_capacity(rows),
        theta_dot: Vec::with_capacity(rows),
        torque_robot: Vec::with_capacity(rows),
        reflex_torque: Vec::with_capacity(rows),
        muscles: config
            .muscles
            .iter()
            .map(|m| MuscleTrace::new(m.params.id, m.reflex, rows))
            .collect(),
        divergence: None,
    };

    for k in 0..=n_steps {
        let out = match sim.control() {
            Ok(out) => out,
            // Leaving the modelled joint range is the geometric form of a
            // runaway; record it like any other divergence.
            Err(Error::AngleOutOfRange { .. } | Error::FiberLength { .. } | Error::NonFinite(_)) => {
                rec.divergence = Some(Divergence {
                    step: k,
                    t: sim.time(),
                    accel: f64::NAN,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let diverged = sim.check_divergence(&out);
        if k % dec == 0 || diverged.is_some() {
            sim.record_row(&mut rec, &out);
        }
        if let Some(d) = diverged {
            rec.divergence = Some(d);
            break;
        }
        if k < n_steps {
            sim.integrate(out.accel);
        }
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflex::ModelClass;
    use core::f64::consts::PI;

    fn cfg(dps: f64, reflex: ReflexParams) -> SimConfig {
        SimConfig::stock(StretchProfile::default().with_velocity_dps(dps), reflex).unwrap()
    }

    #[test]
    fn row_count_matches_duration() {
        let c = cfg(90.0, ReflexParams::default());
        let rec = run_trial(&c).unwrap();
        assert_eq!(rec.len(), 2501);
        let mut c4 = c.clone();
        c4.record_decimation = 4;
        let rec4 = run_trial(&c4).unwrap();
        assert_eq!(rec4.len(), 2500 / 4 + 1);
        assert_eq!(rec4.theta[1], rec.theta[4]);
    }

    #[test]
    fn relaxed_trial_has_no_excitation() {
        let rec = run_trial(&cfg(10.0, ReflexParams::default())).unwrap();
        assert!(rec.divergence.is_none());
        for m in &rec.muscles {
            assert!(m.e.iter().all(|&e| e == 0.0));
            assert!(m.a.iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn theta_stays_in_range() {
        let rec = run_trial(&cfg(90.0, ReflexParams::for_model(ModelClass::Hybrid, 2.0, 0.1))).unwrap();
        let lo = PI / 2.0 - 2f64.to_radians();
        let hi = PI + 2f64.to_radians();
        assert!(rec.theta.iter().all(|&th| th >= lo && th <= hi));
    }

    #[test]
    fn deterministic() {
        let c = cfg(60.0, ReflexParams::for_model(ModelClass::Force, 3.0, 0.1));
        assert_eq!(run_trial(&c).unwrap(), run_trial(&c).unwrap());
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = cfg(90.0, ReflexParams::for_model(ModelClass::Length, 1.0, 0.1));
        c.dt = 0.0;
        assert!(run_trial(&c).is_err());
        let mut c = cfg(90.0, ReflexParams::for_model(ModelClass::Length, 1.0, 0.1));
        c.set_reflex(ReflexParams { delay: 0.0001, ..c.muscles[0].reflex });
        assert!(run_trial(&c).is_err());
    }

    #[test]
    fn divergence_is_flagged_not_fatal() {
        let mut c = cfg(90.0, ReflexParams::default());
        c.gains = PidGains { kp: 2.0e6, ki: 0.0, kd: 0.0, integral_limit: 1.0 };
        let rec = run_trial(&c).unwrap();
        let d = rec.divergence.expect("stiff undamped loop must diverge");
        assert_eq!(rec.t.last().copied(), Some(d.t));
        assert!(rec.len() < c.total_steps() + 1);
    }

    #[test]
    fn rows_between_selects_inclusive_range() {
        let rec = run_trial(&cfg(90.0, ReflexParams::default())).unwrap();
        let r = rec.rows_between(0.5, 1.5);
        assert_eq!(r, 500..1501);
    }
}
