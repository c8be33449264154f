//! Single-DOF elbow: flexor path geometry and skeletal dynamics.
//!
//! Joint angle is measured so that full extension is π and extension is the
//! positive direction. Flexors lengthen as the elbow extends; their torques
//! are negative (they resist extension).

use core::f64::consts::PI;

use libm::{cos, exp, sin};

use crate::{Error, Result};

/// Moment-arm paths are evaluated this far outside the stretch range so that
/// small tracking overshoots past full extension stay inside the model.
pub const RANGE_MARGIN: f64 = 5.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointParams {
    /// Forearm + hand inertia about the elbow, kg m².
    pub inertia: f64,
    /// Passive viscous coefficient, N m s/rad.
    pub damping: f64,
    /// Elastic torque scale, N m.
    pub elastic_gain: f64,
    /// Elastic stiffening rate, 1/rad.
    pub elastic_rate: f64,
    /// Angle at which the joint elastic torque starts, rad.
    pub elastic_onset: f64,
    /// Full extension, rad.
    pub theta_full_ext: f64,
}

impl Default for JointParams {
    fn default() -> Self {
        JointParams {
            inertia: 0.05,
            damping: 0.2,
            elastic_gain: 0.1,
            elastic_rate: 3.0,
            elastic_onset: 2.0 * PI / 3.0,
            theta_full_ext: PI,
        }
    }
}

impl JointParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inertia.is_finite() && self.inertia > 0.0) {
            return Err(Error::InvalidParameter {
                name: "inertia",
                reason: "must be finite and > 0",
            });
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "damping",
                reason: "must be finite and >= 0",
            });
        }
        if !(self.elastic_gain >= 0.0 && self.elastic_rate >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "elastic",
                reason: "coefficients must be >= 0",
            });
        }
        Ok(())
    }
}

/// Moment-arm profile `r(θ) = a + b·sin(π - θ)` anchored so that the MTU
/// length equals `l0` at `theta_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusclePath {
    pub a: f64,
    pub b: f64,
    pub theta_ref: f64,
}

impl MusclePath {
    /// Solves the profile with `a = ratio·b` so that the MTU excursion from
    /// `theta_ref` to full extension equals `lr`.
    pub fn from_excursion(lr: f64, theta_ref: f64, ratio: f64) -> Result<Self> {
        if !(lr > 0.0 && ratio > 0.0) {
            return Err(Error::InvalidParameter {
                name: "excursion",
                reason: "lr and a/b ratio must be > 0",
            });
        }
        if !(theta_ref.is_finite() && theta_ref > 0.0 && theta_ref < PI) {
            return Err(Error::InvalidParameter {
                name: "theta_ref",
                reason: "must lie in (0, π)",
            });
        }
        // ∫ r dθ from theta_ref to π = a(π - θr) + b(1 + cos θr)
        let b = lr / (ratio * (PI - theta_ref) + 1.0 + cos(theta_ref));
        Ok(MusclePath {
            a: ratio * b,
            b,
            theta_ref,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "moment arm",
                reason: "requires a > 0 and b >= 0",
            });
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.theta_ref - RANGE_MARGIN, PI + RANGE_MARGIN)
    }

    fn check(&self, theta: f64) -> Result<()> {
        let (min, max) = self.range();
        if !theta.is_finite() {
            return Err(Error::NonFinite("muscle path"));
        }
        if theta < min || theta > max {
            return Err(Error::AngleOutOfRange { theta, min, max });
        }
        Ok(())
    }

    /// Moment arm in meters.
    pub fn moment_arm(&self, theta: f64) -> Result<f64> {
        self.check(theta)?;
        Ok(self.a + self.b * sin(PI - theta))
    }

    /// MTU length `l0 + ∫ r`, in closed form.
    pub fn muscle_length(&self, theta: f64, l0: f64) -> Result<f64> {
        self.check(theta)?;
        Ok(l0 + self.a * (theta - self.theta_ref) + self.b * (cos(self.theta_ref) - cos(theta)))
    }

    /// MTU lengthening velocity `r(θ)·θ̇`.
    pub fn muscle_velocity(&self, theta: f64, theta_dot: f64) -> Result<f64> {
        Ok(self.moment_arm(theta)? * theta_dot)
    }
}

/// Net flexor torque `-Σ r_i F_i`.
pub fn joint_torque_from_muscles(theta: f64, paths: &[MusclePath], forces: &[f64]) -> Result<f64> {
    debug_assert_eq!(paths.len(), forces.len());
    let mut torque = 0.0;
    for (path, &f) in paths.iter().zip(forces) {
        torque -= path.moment_arm(theta)? * f;
    }
    Ok(torque)
}

/// Lumped passive joint torque: exponential elastic stiffening toward full
/// extension plus linear viscosity.
pub fn passive_joint_torque(theta: f64, theta_dot: f64, joint: &JointParams) -> f64 {
    elastic_joint_torque(theta, joint) - joint.damping * theta_dot
}

/// Elastic share of [`passive_joint_torque`].
pub fn elastic_joint_torque(theta: f64, joint: &JointParams) -> f64 {
    if theta > joint.elastic_onset {
        -joint.elastic_gain * (exp(joint.elastic_rate * (theta - joint.elastic_onset)) - 1.0)
    } else {
        0.0
    }
}

pub fn angular_acceleration(
    theta: f64,
    theta_dot: f64,
    torque_robot: f64,
    torque_muscle: f64,
    joint: &JointParams,
) -> f64 {
    (torque_robot + torque_muscle + passive_joint_torque(theta, theta_dot, joint)) / joint.inertia
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::muscle::MuscleParams;

    /// Composite Simpson quadrature, independent of the closed forms above.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn stock_path(m: &MuscleParams) -> MusclePath {
        MusclePath::from_excursion(m.lr, PI / 2.0, 1.0).unwrap()
    }

    #[test]
    fn moment_arm_endpoints() {
        let p = MusclePath { a: 0.02, b: 0.01, theta_ref: PI / 2.0 };
        assert_eq!(p.moment_arm(PI).unwrap(), 0.02);
        assert!((p.moment_arm(PI / 2.0).unwrap() - 0.03).abs() < 1e-15);
        assert!(p.moment_arm(1.0).is_err());
        assert!(p.moment_arm(PI + 0.2).is_err());
        assert!(p.moment_arm(f64::NAN).is_err());
    }

    #[test]
    fn lhb_path_from_seventy_degrees() {
        let th = 70f64.to_radians();
        let p = MusclePath::from_excursion(0.054, th, 1.0).unwrap();
        assert_eq!(p.a, p.b);
        assert!((p.a - 0.01655).abs() < 5e-6, "a = {}", p.a);
        let q = simpson(|u| p.a + p.b * (PI - u).sin(), th, PI, 2000);
        assert!((q - 0.054).abs() < 1e-9);
    }

    #[test]
    fn muscle_length_anchors_and_quadrature() {
        let lhb = MuscleParams::lhb();
        let p = stock_path(&lhb);
        assert_eq!(p.muscle_length(PI / 2.0, lhb.l0).unwrap(), 0.36);
        assert!((p.muscle_length(PI, lhb.l0).unwrap() - 0.414).abs() < 1e-12);
        let mid = 0.75 * PI;
        let q = lhb.l0 + simpson(|u| p.moment_arm(u).unwrap(), PI / 2.0, mid, 2000);
        let l = p.muscle_length(mid, lhb.l0).unwrap();
        assert!(l > 0.36 && l < 0.414);
        assert!((l - q).abs() < 1e-9);
    }

    #[test]
    fn excursion_matches_table_for_every_muscle() {
        for m in [MuscleParams::lhb(), MuscleParams::shb(), MuscleParams::brd()] {
            for th in [70f64, 80.0, 90.0] {
                let p = MusclePath::from_excursion(m.lr, th.to_radians(), 1.0).unwrap();
                let span = p.muscle_length(PI, m.l0).unwrap() - p.muscle_length(p.theta_ref, m.l0).unwrap();
                assert!((span - m.lr).abs() < 1e-6);
                let q = simpson(|u| p.moment_arm(u).unwrap(), p.theta_ref, PI, 4000);
                assert!((q - m.lr).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn muscle_velocity_product_and_sign() {
        let p = MusclePath { a: 0.028, b: 0.0, theta_ref: PI / 2.0 };
        assert_eq!(p.muscle_velocity(2.0, 0.0).unwrap(), 0.0);
        let v = p.muscle_velocity(2.0, 1.5708).unwrap();
        assert!((v - 0.04398).abs() < 1e-5);
        assert_eq!(p.muscle_velocity(2.0, -1.5708).unwrap(), -v);
    }

    #[test]
    fn flexor_torque() {
        let p = MusclePath { a: 0.03, b: 0.0, theta_ref: PI / 2.0 };
        assert_eq!(joint_torque_from_muscles(2.0, &[p, p], &[0.0, 0.0]).unwrap(), 0.0);
        let t = joint_torque_from_muscles(2.0, &[p], &[100.0]).unwrap();
        assert!((t + 3.0).abs() < 1e-12);
        let q = MusclePath { a: 0.01, b: 0.02, theta_ref: PI / 2.0 };
        let both = joint_torque_from_muscles(2.0, &[p, q], &[100.0, 40.0]).unwrap();
        let sep = joint_torque_from_muscles(2.0, &[p], &[100.0]).unwrap()
            + joint_torque_from_muscles(2.0, &[q], &[40.0]).unwrap();
        assert!((both - sep).abs() < 1e-12);
    }

    #[test]
    fn passive_joint_torque_values() {
        let j = JointParams::default();
        assert_eq!(passive_joint_torque(j.elastic_onset, 0.0, &j), 0.0);
        assert_eq!(passive_joint_torque(PI / 2.0, 1.0, &j), -j.damping);
        // 0.1 * (e^π - 1)
        let at_full = passive_joint_torque(PI, 0.0, &j);
        assert!((at_full + 2.214_069_263_277_926_5).abs() < 1e-12, "{at_full}");
        assert!((-4.0..=-2.0).contains(&at_full));
    }

    #[test]
    fn acceleration_balance() {
        let j = JointParams {
            damping: 0.0,
            elastic_gain: 0.0,
            ..JointParams::default()
        };
        assert_eq!(angular_acceleration(2.0, 0.0, 0.0, 0.0, &j), 0.0);
        assert!((angular_acceleration(2.0, 0.0, 0.05, 0.0, &j) - 1.0).abs() < 1e-12);
        let heavy = JointParams { inertia: 0.1, ..j };
        assert!((angular_acceleration(2.0, 0.0, 0.05, 0.0, &heavy) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn free_rotation_keeps_velocity() {
        let j = JointParams {
            damping: 0.0,
            elastic_gain: 0.0,
            ..JointParams::default()
        };
        let (mut th, mut w) = (PI / 2.0, 0.37);
        for _ in 0..5000 {
            let acc = angular_acceleration(th, w, 0.0, 0.0, &j);
            w += acc * 1e-4;
            th += w * 1e-4;
        }
        assert_eq!(w, 0.37);
    }
}
