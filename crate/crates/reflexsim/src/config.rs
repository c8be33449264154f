//! Flat `key = value` configuration file with bracketed sections.
//!
//! The file is parsed as TOML. Every key is optional and falls back to the
//! library defaults; [`ConfigFile::default_text`] prints the canonical file.
//! Angles are given in degrees.

use std::path::Path;

use reflexsim_core::engine::{SimConfig, DEFAULT_ARM_RATIO};
use reflexsim_core::muscle::HillCurves;
use reflexsim_core::plant::JointParams;
use reflexsim_core::reflex::{ModelClass, ReflexParams};
use reflexsim_core::robot::{PidGains, StretchProfile};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, AppError, Result};
use crate::protocol::{GridGroup, ProtocolSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub record_decimation: usize,
    /// Moment-arm shape ratio `a / b`.
    pub arm_ratio: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            dt: 0.001,
            record_decimation: 1,
            arm_ratio: DEFAULT_ARM_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub theta_init_deg: f64,
    pub theta_final_deg: f64,
    pub velocity_dps: f64,
    pub t_start: f64,
    pub t_hold: f64,
}

/// Radians to degrees, trimmed to 1e-9 deg so defaults print cleanly.
fn deg(rad: f64) -> f64 {
    (rad.to_degrees() * 1e9).round() / 1e9
}

impl Default for ProfileSection {
    fn default() -> Self {
        let p = StretchProfile::default();
        ProfileSection {
            theta_init_deg: deg(p.theta_init),
            theta_final_deg: deg(p.theta_final),
            velocity_dps: deg(p.omega),
            t_start: p.t_start,
            t_hold: p.t_hold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointSection {
    pub inertia: f64,
    pub damping: f64,
    pub elastic_gain: f64,
    pub elastic_rate: f64,
    pub elastic_onset_deg: f64,
    pub theta_full_ext_deg: f64,
}

impl Default for JointSection {
    fn default() -> Self {
        let j = JointParams::default();
        JointSection {
            inertia: j.inertia,
            damping: j.damping,
            elastic_gain: j.elastic_gain,
            elastic_rate: j.elastic_rate,
            elastic_onset_deg: deg(j.elastic_onset),
            theta_full_ext_deg: deg(j.theta_full_ext),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidSection {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
}

impl Default for PidSection {
    fn default() -> Self {
        let g = PidGains::default();
        PidSection {
            kp: g.kp,
            ki: g.ki,
            kd: g.kd,
            integral_limit: g.integral_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflexSection {
    pub drive: f64,
    pub gain_length: f64,
    pub gain_velocity: f64,
    pub gain_force: f64,
    pub lambda_length: f64,
    pub lambda_velocity: f64,
    pub lambda_force: f64,
    /// Seconds.
    pub delay: f64,
}

impl Default for ReflexSection {
    fn default() -> Self {
        ReflexSection::from(ReflexParams::default())
    }
}

impl From<ReflexParams> for ReflexSection {
    fn from(p: ReflexParams) -> Self {
        ReflexSection {
            drive: p.drive,
            gain_length: p.gain_length,
            gain_velocity: p.gain_velocity,
            gain_force: p.gain_force,
            lambda_length: p.lambda_length,
            lambda_velocity: p.lambda_velocity,
            lambda_force: p.lambda_force,
            delay: p.delay,
        }
    }
}

impl ReflexSection {
    pub fn params(&self) -> ReflexParams {
        ReflexParams {
            drive: self.drive,
            gain_length: self.gain_length,
            gain_velocity: self.gain_velocity,
            gain_force: self.gain_force,
            lambda_length: self.lambda_length,
            lambda_velocity: self.lambda_velocity,
            lambda_force: self.lambda_force,
            delay: self.delay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesSection {
    pub fl_width: f64,
    pub fv_eccentric_max: f64,
    pub fv_curvature: f64,
    pub k_pe: f64,
    pub f_pe_scale: f64,
}

impl Default for CurvesSection {
    fn default() -> Self {
        let c = HillCurves::default();
        CurvesSection {
            fl_width: c.fl_width,
            fv_eccentric_max: c.fv_eccentric_max,
            fv_curvature: c.fv_curvature,
            k_pe: c.k_pe,
            f_pe_scale: c.f_pe_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// `length`, `velocity`, `force` or `hybrid`.
    pub model: String,
    pub gains: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub velocities_dps: Vec<f64>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            model: "hybrid".into(),
            gains: vec![1.0, 2.0],
            lambdas: vec![0.1, 0.2, 0.3, 0.4],
            velocities_dps: crate::protocol::default_velocities(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub sim: SimSection,
    pub profile: ProfileSection,
    pub joint: JointSection,
    pub pid: PidSection,
    pub reflex: ReflexSection,
    pub curves: CurvesSection,
    pub protocol: ProtocolSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config sections serialise")
    }

    pub fn default_text() -> String {
        ConfigFile::default().to_text()
    }

    pub fn profile(&self) -> StretchProfile {
        let p = &self.profile;
        StretchProfile {
            theta_init: p.theta_init_deg.to_radians(),
            theta_final: p.theta_final_deg.to_radians(),
            omega: p.velocity_dps.to_radians(),
            t_start: p.t_start,
            t_hold: p.t_hold,
        }
    }

    /// Simulation configuration with the `[reflex]` section applied to all muscles.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::stock(self.profile(), self.reflex.params())?;
        cfg.dt = self.sim.dt;
        cfg.record_decimation = self.sim.record_decimation;
        if self.sim.arm_ratio != DEFAULT_ARM_RATIO {
            cfg.reanchor_paths(self.sim.arm_ratio)?;
        }
        let j = &self.joint;
        cfg.joint = JointParams {
            inertia: j.inertia,
            damping: j.damping,
            elastic_gain: j.elastic_gain,
            elastic_rate: j.elastic_rate,
            elastic_onset: j.elastic_onset_deg.to_radians(),
            theta_full_ext: j.theta_full_ext_deg.to_radians(),
        };
        let g = &self.pid;
        cfg.gains = PidGains {
            kp: g.kp,
            ki: g.ki,
            kd: g.kd,
            integral_limit: g.integral_limit,
        };
        let c = &self.curves;
        cfg.curves = HillCurves {
            fl_width: c.fl_width,
            fv_eccentric_max: c.fv_eccentric_max,
            fv_curvature: c.fv_curvature,
            k_pe: c.k_pe,
            f_pe_scale: c.f_pe_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn protocol_spec(&self) -> Result<ProtocolSpec> {
        let p = &self.protocol;
        let model = ModelClass::parse(&p.model)
            .ok_or_else(|| AppError::Usage(format!("unknown model '{}'", p.model)))?;
        let spec = ProtocolSpec {
            groups: vec![GridGroup {
                model,
                gains: p.gains.clone(),
                lambdas: p.lambdas.clone(),
            }],
            velocities_dps: p.velocities_dps.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_text_round_trips() {
        let text = ConfigFile::default_text();
        assert!(text.contains("[pid]"));
        assert_eq!(ConfigFile::parse(&text).unwrap(), ConfigFile::default());
    }

    #[test]
    fn defaults_match_library() {
        let cfg = ConfigFile::default().sim_config().unwrap();
        let stock = SimConfig::stock(StretchProfile::default(), ReflexParams::default()).unwrap();
        assert_eq!(cfg.muscles, stock.muscles);
        assert_eq!(cfg.gains, stock.gains);
        assert_eq!(cfg.curves, stock.curves);
        assert_eq!(cfg.dt, stock.dt);
        assert!((cfg.joint.elastic_onset - stock.joint.elastic_onset).abs() < 1e-15);
        assert!((cfg.profile.omega - stock.profile.omega).abs() < 1e-15);
    }

    #[test]
    fn partial_file_overrides() {
        let c = ConfigFile::parse("[pid]\nkp = 100\n\n[profile]\nvelocity_dps = 30\n").unwrap();
        assert_eq!(c.pid.kp, 100.0);
        assert_eq!(c.pid.ki, PidSection::default().ki);
        assert!((c.profile().omega - 30f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ConfigFile::parse("[pid]\nkq = 1\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = ConfigFile::default();
        c.sim.dt = 0.0;
        assert!(c.sim_config().is_err());
        let mut c = ConfigFile::default();
        c.protocol.velocities_dps.clear();
        assert!(matches!(c.protocol_spec(), Err(AppError::Usage(_))));
    }
}
