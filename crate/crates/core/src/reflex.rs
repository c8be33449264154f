//! Delayed stretch-reflex controller.
//!
//! Each flexor gets its own controller. The excitation is
//!
//! ```text
//! E = clamp(C + G_l·R_l + G_v·R_v + G_f·R_f, 0, 1)
//! ```
//!
//! where each `R` is a thresholded, normalized feedback term evaluated on the
//! feedback sample from one reflex delay ago.

use alloc::collections::VecDeque;
use core::fmt;

use libm::round;

use crate::muscle::MuscleParams;
use crate::{Error, Result};

/// The four spasticity model families, distinguished by which gains are live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelClass {
    Length,
    Velocity,
    Force,
    /// Length + velocity with tied gains and thresholds.
    Hybrid,
}

impl ModelClass {
    pub const ALL: [ModelClass; 4] = [
        ModelClass::Length,
        ModelClass::Velocity,
        ModelClass::Force,
        ModelClass::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelClass::Length => "length",
            ModelClass::Velocity => "velocity",
            ModelClass::Force => "force",
            ModelClass::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "length" | "len" => Some(ModelClass::Length),
            "velocity" | "vel" => Some(ModelClass::Velocity),
            "force" | "for" => Some(ModelClass::Force),
            "hybrid" => Some(ModelClass::Hybrid),
            _ => None,
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_REFLEX_DELAY: f64 = 0.030;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflexParams {
    /// Supraspinal drive `C`; zero for a relaxed limb.
    pub drive: f64,
    pub gain_length: f64,
    pub gain_velocity: f64,
    pub gain_force: f64,
    pub lambda_length: f64,
    pub lambda_velocity: f64,
    pub lambda_force: f64,
    /// Reflex delay, s.
    pub delay: f64,
}

impl Default for ReflexParams {
    /// The relaxed, spasticity-free elbow.
    fn default() -> Self {
        ReflexParams {
            drive: 0.0,
            gain_length: 0.0,
            gain_velocity: 0.0,
            gain_force: 0.0,
            lambda_length: 0.0,
            lambda_velocity: 0.0,
            lambda_force: 0.0,
            delay: DEFAULT_REFLEX_DELAY,
        }
    }
}

impl ReflexParams {
    /// Parameters for one model family with a single gain and threshold.
    pub fn for_model(class: ModelClass, gain: f64, lambda: f64) -> Self {
        let mut p = ReflexParams::default();
        match class {
            ModelClass::Length => {
                p.gain_length = gain;
                p.lambda_length = lambda;
            }
            ModelClass::Velocity => {
                p.gain_velocity = gain;
                p.lambda_velocity = lambda;
            }
            ModelClass::Force => {
                p.gain_force = gain;
                p.lambda_force = lambda;
            }
            ModelClass::Hybrid => {
                p.gain_length = gain;
                p.gain_velocity = gain;
                p.lambda_length = lambda;
                p.lambda_velocity = lambda;
            }
        }
        p
    }

    pub fn has_reflex(&self) -> bool {
        self.gain_length > 0.0 || self.gain_velocity > 0.0 || self.gain_force > 0.0
    }

    /// `(G_l, G_v, G_f, λ_l, λ_v, λ_f)`, the ordering key used for sorting.
    pub fn vector(&self) -> [f64; 6] {
        [
            self.gain_length,
            self.gain_velocity,
            self.gain_force,
            self.lambda_length,
            self.lambda_velocity,
            self.lambda_force,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drive) {
            return Err(Error::InvalidParameter {
                name: "C",
                reason: "supraspinal drive must lie in [0, 1]",
            });
        }
        for (name, g) in [
            ("G_l", self.gain_length),
            ("G_v", self.gain_velocity),
            ("G_f", self.gain_force),
        ] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "gain must be finite and >= 0",
                });
            }
        }
        for (name, l) in [
            ("lambda_l", self.lambda_length),
            ("lambda_v", self.lambda_velocity),
            ("lambda_f", self.lambda_force),
        ] {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "threshold factor must lie in [0, 1]",
                });
            }
        }
        if !(self.delay.is_finite() && self.delay >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: "delay must be finite and >= 0",
            });
        }
        Ok(())
    }
}

/// `A = 3·lr / (l0 + lr)`, equalizing the magnitude of the three channels.
pub fn scaling_factor(m: &MuscleParams) -> f64 {
    3.0 * m.lr / (m.l0 + m.lr)
}

pub fn length_threshold(m: &MuscleParams, p: &ReflexParams) -> f64 {
    m.l0 + p.lambda_length * m.lr
}

pub fn velocity_threshold(m: &MuscleParams, p: &ReflexParams) -> f64 {
    p.lambda_velocity * m.v_max
}

pub fn force_threshold(m: &MuscleParams, p: &ReflexParams) -> f64 {
    p.lambda_force * m.f_max
}

pub fn reflex_length(l: f64, m: &MuscleParams, p: &ReflexParams) -> f64 {
    let lt = length_threshold(m, p);
    if l >= lt {
        (l - lt) / (m.l0 + m.lr)
    } else {
        0.0
    }
}

pub fn reflex_velocity(v: f64, m: &MuscleParams, p: &ReflexParams) -> f64 {
    let vt = velocity_threshold(m, p);
    if v >= vt {
        scaling_factor(m) * (v - vt) / m.v_max
    } else {
        0.0
    }
}

pub fn reflex_force(f: f64, m: &MuscleParams, p: &ReflexParams) -> f64 {
    let ft = force_threshold(m, p);
    if f >= ft {
        scaling_factor(m) * (f - ft) / m.f_max
    } else {
        0.0
    }
}

/// Normalized reflex activations `(R_l, R_v, R_f)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReflexTerms {
    pub length: f64,
    pub velocity: f64,
    pub force: f64,
}

impl ReflexTerms {
    pub fn evaluate(sample: &FeedbackSample, m: &MuscleParams, p: &ReflexParams) -> Self {
        ReflexTerms {
            length: reflex_length(sample.l, m, p),
            velocity: reflex_velocity(sample.v, m, p),
            force: reflex_force(sample.f, m, p),
        }
    }
}

/// Excitation clamped to `[0, 1]`.
pub fn excitation(p: &ReflexParams, r: ReflexTerms) -> f64 {
    // A disabled channel contributes nothing, whatever its feedback value.
    let mut e = p.drive;
    if p.gain_length != 0.0 {
        e += p.gain_length * r.length;
    }
    if p.gain_velocity != 0.0 {
        e += p.gain_velocity * r.velocity;
    }
    if p.gain_force != 0.0 {
        e += p.gain_force * r.force;
    }
    e.clamp(0.0, 1.0)
}

/// Proprioceptive feedback of one muscle at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackSample {
    /// MTU length, m.
    pub l: f64,
    /// Lengthening velocity, m/s.
    pub v: f64,
    /// Tension, N.
    pub f: f64,
    pub t: f64,
}

impl FeedbackSample {
    /// Resting feedback at the start of the stretch.
    pub fn neutral(m: &MuscleParams) -> Self {
        FeedbackSample {
            l: m.l0,
            v: 0.0,
            f: 0.0,
            t: 0.0,
        }
    }
}

/// Fixed-length FIFO realizing the reflex conduction delay.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    ring: VecDeque<FeedbackSample>,
    capacity: usize,
    neutral: FeedbackSample,
}

impl DelayBuffer {
    pub fn new(capacity: usize, neutral: FeedbackSample) -> Self {
        DelayBuffer {
            ring: VecDeque::with_capacity(capacity + 1),
            capacity,
            neutral,
        }
    }

    /// Buffer sized for `round(delay / dt)` steps.
    pub fn for_delay(delay: f64, dt: f64, neutral: FeedbackSample) -> Self {
        Self::new(delay_steps(delay, dt), neutral)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_filled(&self) -> bool {
        self.ring.len() == self.capacity
    }

    /// Pushes the current sample and returns the one from `capacity` steps
    /// ago, or the neutral sample while the buffer is still filling.
    pub fn push_pop(&mut self, sample: FeedbackSample) -> FeedbackSample {
        if self.capacity == 0 {
            return sample;
        }
        self.ring.push_back(sample);
        if self.ring.len() > self.capacity {
            self.ring.pop_front().unwrap_or(self.neutral)
        } else {
            self.neutral
        }
    }
}

pub fn delay_steps(delay: f64, dt: f64) -> usize {
    round(delay / dt) as usize
}

/// One reflex loop attached to one muscle.
#[derive(Debug, Clone)]
pub struct ReflexController {
    pub muscle: MuscleParams,
    pub params: ReflexParams,
    buffer: DelayBuffer,
    dt: f64,
}

impl ReflexController {
    pub fn new(muscle: MuscleParams, params: ReflexParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be finite and > 0",
            });
        }
        let buffer = DelayBuffer::for_delay(params.delay, dt, FeedbackSample::neutral(&muscle));
        Ok(ReflexController {
            muscle,
            params,
            buffer,
            dt,
        })
    }

    pub fn delay_steps(&self) -> usize {
        self.buffer.capacity()
    }

    /// Feeds the current sample and returns the excitation computed from the
    /// delayed one.
    pub fn step(&mut self, sample: FeedbackSample, dt: f64) -> Result<f64> {
        if dt != self.dt {
            return Err(Error::TimeStepChanged {
                expected: self.dt,
                got: dt,
            });
        }
        let delayed = self.buffer.push_pop(sample);
        let terms = ReflexTerms::evaluate(&delayed, &self.muscle, &self.params);
        Ok(excitation(&self.params, terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn p(class: ModelClass, g: f64, l: f64) -> ReflexParams {
        ReflexParams::for_model(class, g, l)
    }

    #[test]
    fn scaling_factors() {
        assert!(rel(scaling_factor(&MuscleParams::lhb()), 0.162 / 0.414) < 1e-12);
        assert!(rel(scaling_factor(&MuscleParams::shb()), 0.162 / 0.334) < 1e-12);
        assert!(rel(scaling_factor(&MuscleParams::brd()), 0.5) < 1e-12);
        assert!((scaling_factor(&MuscleParams::lhb()) - 0.391304).abs() < 5e-7);
        assert!((scaling_factor(&MuscleParams::shb()) - 0.485030).abs() < 5e-7);
    }

    #[test]
    fn length_term() {
        let m = MuscleParams::lhb();
        let q = p(ModelClass::Length, 1.0, 0.1);
        assert_eq!(reflex_length(0.36, &m, &q), 0.0);
        assert!(rel(reflex_length(0.414, &m, &q), 0.0486 / 0.414) < 1e-9);
        for mm in [MuscleParams::lhb(), MuscleParams::shb(), MuscleParams::brd()] {
            let q = p(ModelClass::Length, 1.0, 1.0);
            assert_eq!(reflex_length(mm.l0 + mm.lr, &mm, &q), 0.0);
        }
    }

    #[test]
    fn velocity_term() {
        let m = MuscleParams::lhb();
        let q = p(ModelClass::Velocity, 1.0, 0.1);
        assert_eq!(reflex_velocity(0.01, &m, &q), 0.0);
        assert!(rel(reflex_velocity(0.1, &m, &q), (0.162 / 0.414) * (0.082 / 0.18)) < 1e-9);
        assert_eq!(reflex_velocity(-0.3, &m, &q), 0.0);
    }

    #[test]
    fn force_term() {
        let m = MuscleParams::lhb();
        let q = p(ModelClass::Force, 1.0, 0.1);
        assert_eq!(reflex_force(50.0, &m, &q), 0.0);
        assert!(rel(reflex_force(200.0, &m, &q), (0.162 / 0.414) * (127.1 / 729.0)) < 1e-9);
        assert_eq!(reflex_force(72.9, &m, &q), 0.0);
    }

    #[test]
    fn excitation_sum_and_clamp() {
        assert_eq!(excitation(&ReflexParams::default(), ReflexTerms::default()), 0.0);
        let q = ReflexParams {
            gain_length: 2.0,
            gain_velocity: 2.0,
            ..ReflexParams::default()
        };
        let r = ReflexTerms {
            length: 0.0486 / 0.414,
            velocity: (0.162 / 0.414) * (0.082 / 0.18),
            force: 0.0,
        };
        let expected = 2.0 * (0.0486 / 0.414) + 2.0 * (0.162 / 0.414) * (0.082 / 0.18);
        assert!(rel(excitation(&q, r), expected) < 1e-9);
        let big = ReflexParams { drive: 0.3, gain_length: 1.0, ..ReflexParams::default() };
        let r = ReflexTerms { length: 1.0, ..ReflexTerms::default() };
        assert_eq!(excitation(&big, r), 1.0);
    }

    #[test]
    fn validation() {
        assert!(p(ModelClass::Hybrid, 2.0, 0.35).validate().is_ok());
        assert!(p(ModelClass::Length, 1.0, 1.2).validate().is_err());
        assert!(p(ModelClass::Length, -1.0, 0.1).validate().is_err());
        let mut q = ReflexParams::default();
        q.delay = -0.01;
        assert!(q.validate().is_err());
        q.delay = 0.03;
        q.drive = 1.5;
        assert!(q.validate().is_err());
    }

    #[test]
    fn buffer_capacity_and_prefill() {
        let m = MuscleParams::lhb();
        let b = DelayBuffer::for_delay(0.030, 0.001, FeedbackSample::neutral(&m));
        assert_eq!(b.capacity(), 30);

        let mut c = ReflexController::new(m, p(ModelClass::Length, 3.0, 0.1), 0.001).unwrap();
        for k in 0..30 {
            let s = FeedbackSample { l: 0.414, v: 1.0, f: 700.0, t: k as f64 * 1e-3 };
            assert_eq!(c.step(s, 0.001).unwrap(), 0.0, "step {k}");
        }
        let s = FeedbackSample { l: 0.414, v: 0.0, f: 0.0, t: 0.03 };
        assert!(c.step(s, 0.001).unwrap() > 0.0);
    }

    #[test]
    fn step_input_onset_delayed_by_buffer_length() {
        let m = MuscleParams::lhb();
        let mut c = ReflexController::new(m, p(ModelClass::Length, 2.0, 0.1), 0.001).unwrap();
        let crossing = 57;
        let mut onset = None;
        for k in 0..200 {
            let l = if k >= crossing { 0.40 } else { 0.36 };
            let e = c.step(FeedbackSample { l, v: 0.0, f: 0.0, t: k as f64 * 1e-3 }, 0.001).unwrap();
            if e > 0.0 && onset.is_none() {
                onset = Some(k);
            }
        }
        assert_eq!(onset, Some(crossing + 30));
    }

    #[test]
    fn controller_rejects_changed_dt() {
        let m = MuscleParams::lhb();
        let mut c = ReflexController::new(m, ReflexParams::default(), 0.001).unwrap();
        assert!(matches!(
            c.step(FeedbackSample::neutral(&m), 0.0005),
            Err(Error::TimeStepChanged { .. })
        ));
    }

    #[test]
    fn zero_delay_passes_through() {
        let m = MuscleParams::lhb();
        let q = ReflexParams { delay: 0.0, ..p(ModelClass::Length, 1.0, 0.1) };
        let mut c = ReflexController::new(m, q, 0.001).unwrap();
        let e = c.step(FeedbackSample { l: 0.414, v: 0.0, f: 0.0, t: 0.0 }, 0.001).unwrap();
        assert!(e > 0.0);
    }

    #[test]
    fn relaxed_baseline_is_drive() {
        let m = MuscleParams::shb();
        let q = ReflexParams { drive: 0.2, ..ReflexParams::default() };
        let mut c = ReflexController::new(m, q, 0.001).unwrap();
        for k in 0..100 {
            let s = FeedbackSample { l: 0.3 + 1e-4 * k as f64, v: 0.1, f: 300.0, t: 0.0 };
            assert_eq!(c.step(s, 0.001).unwrap(), 0.2);
        }
    }

    #[test]
    fn model_class_names() {
        for c in ModelClass::ALL {
            assert_eq!(ModelClass::parse(c.name()), Some(c));
        }
        assert_eq!(ModelClass::parse("Len."), None);
        assert_eq!(ModelClass::parse("len"), Some(ModelClass::Length));
    }
}
