//! Ramp-and-hold reference and the robot's PID position loop.
//!
//! The robot is an ideal torque source acting directly on the elbow joint.

use core::f64::consts::PI;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchProfile {
    pub theta_init: f64,
    pub theta_final: f64,
    /// Ramp velocity, rad/s.
    pub omega: f64,
    /// Time held at `theta_init` before the ramp, s.
    pub t_start: f64,
    /// Time held at `theta_final` after the ramp, s.
    pub t_hold: f64,
}

impl Default for StretchProfile {
    fn default() -> Self {
        StretchProfile {
            theta_init: PI / 2.0,
            theta_final: PI,
            omega: PI / 2.0,
            t_start: 0.5,
            t_hold: 1.0,
        }
    }
}

impl StretchProfile {
    pub fn with_velocity_dps(mut self, dps: f64) -> Self {
        self.omega = dps.to_radians();
        self
    }

    pub fn ramp_duration(&self) -> f64 {
        (self.theta_final - self.theta_init) / self.omega
    }

    pub fn ramp_end(&self) -> f64 {
        self.t_start + self.ramp_duration()
    }

    pub fn duration(&self) -> f64 {
        self.ramp_end() + self.t_hold
    }

    /// Time window covering the middle `fraction` of the ramp.
    pub fn ramp_window(&self, fraction: f64) -> (f64, f64) {
        let margin = 0.5 * (1.0 - fraction) * self.ramp_duration();
        (self.t_start + margin, self.ramp_end() - margin)
    }

    /// `(θ_ref, ω_ref)` at time `t`.
    pub fn reference(&self, t: f64) -> (f64, f64) {
        if t < self.t_start {
            (self.theta_init, 0.0)
        } else if t < self.ramp_end() {
            let th = self.theta_init + self.omega * (t - self.t_start);
            (th.min(self.theta_final), self.omega)
        } else {
            (self.theta_final, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_init.is_finite() && self.theta_init < self.theta_final && self.theta_final <= PI) {
            return Err(Error::InvalidParameter {
                name: "profile",
                reason: "requires theta_init < theta_final <= π",
            });
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: "ramp velocity must be > 0",
            });
        }
        if !(self.t_start >= 0.0 && self.t_hold >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "profile",
                reason: "phase durations must be >= 0",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Cap on the integral torque contribution, N m.
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            kp: 2000.0,
            ki: 20000.0,
            kd: 70.0,
            integral_limit: 60.0,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.kd >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "pid",
                reason: "gains must be >= 0",
            });
        }
        if !(self.integral_limit > 0.0) {
            return Err(Error::InvalidParameter {
                name: "integral_limit",
                reason: "must be > 0",
            });
        }
        Ok(())
    }
}

/// One PID update. Returns `(torque, integral_state)`.
///
/// The integral state is clamped to `±integral_limit / ki` so the integral
/// torque never exceeds `integral_limit`.
pub fn pid_step(
    theta: f64,
    theta_dot: f64,
    theta_ref: f64,
    omega_ref: f64,
    integral: f64,
    gains: &PidGains,
    dt: f64,
) -> Result<(f64, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: "must be > 0",
        });
    }
    let e = theta_ref - theta;
    let e_dot = omega_ref - theta_dot;
    let bound = if gains.ki > 0.0 {
        gains.integral_limit / gains.ki
    } else {
        f64::INFINITY
    };
    let integral = (integral + e * dt).clamp(-bound, bound);
    Ok((gains.kp * e + gains.ki * integral + gains.kd * e_dot, integral))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_phases() {
        let p = StretchProfile::default();
        assert_eq!(p.reference(0.0), (p.theta_init, 0.0));
        let (th, w) = p.reference(p.t_start + 0.5);
        assert!((th - 135f64.to_radians()).abs() < 1e-12);
        assert_eq!(w, p.omega);
        assert_eq!(p.reference(100.0), (PI, 0.0));
    }

    #[test]
    fn durations() {
        let p = StretchProfile::default().with_velocity_dps(90.0);
        assert!((p.ramp_duration() - 1.0).abs() < 1e-12);
        assert!((p.duration() - 2.5).abs() < 1e-12);
        let slow = StretchProfile::default().with_velocity_dps(10.0);
        assert!((slow.ramp_duration() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn reference_continuous_and_monotone() {
        let p = StretchProfile::default().with_velocity_dps(40.0);
        let dt = 1e-4;
        let n = (p.duration() / dt) as usize + 100;
        let mut prev = p.reference(0.0).0;
        for k in 1..n {
            let th = p.reference(k as f64 * dt).0;
            assert!(th >= prev);
            assert!(th - prev <= p.omega * dt + 1e-12);
            prev = th;
        }
    }

    #[test]
    fn profile_validation() {
        assert!(StretchProfile::default().validate().is_ok());
        let bad = StretchProfile { theta_final: 4.0, ..StretchProfile::default() };
        assert!(bad.validate().is_err());
        let bad = StretchProfile { omega: 0.0, ..StretchProfile::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pid_terms() {
        let g = PidGains { kp: 200.0, ki: 0.0, kd: 0.0, integral_limit: 10.0 };
        assert_eq!(pid_step(1.0, 0.0, 1.0, 0.0, 0.0, &g, 1e-3).unwrap(), (0.0, 0.0));
        let (t, _) = pid_step(1.0, 0.0, 1.1, 0.0, 0.0, &g, 1e-3).unwrap();
        assert!((t - 20.0).abs() < 1e-9);
        assert!(pid_step(1.0, 0.0, 1.1, 0.0, 0.0, &g, 0.0).is_err());
    }

    #[test]
    fn pid_anti_windup() {
        let g = PidGains { kp: 0.0, ki: 50.0, kd: 0.0, integral_limit: 10.0 };
        let mut integ = 0.0;
        let mut torque = 0.0;
        for _ in 0..1000 {
            (torque, integ) = pid_step(0.0, 0.0, 1.0, 0.0, integ, &g, 1e-3).unwrap();
        }
        assert!((torque - 10.0).abs() < 1e-9);
        assert!((integ - 0.2).abs() < 1e-12);
    }
}
