//! Hill-type musculotendon units with a rigid tendon.
//!
//! Fiber length is `l_mtu - tendon_slack`, normalized by the optimal fiber
//! length. The tendon slack of each stock muscle is chosen so that the
//! normalized fiber length is exactly 1 at the start of the stretch.

use core::fmt;

use libm::exp;

use crate::{Error, Result};

/// The three elbow flexors carrying a reflex controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MuscleId {
    /// Long head of biceps brachii.
    Lhb,
    /// Short head of biceps brachii.
    Shb,
    /// Brachioradialis.
    Brd,
}

impl MuscleId {
    pub const ALL: [MuscleId; 3] = [MuscleId::Lhb, MuscleId::Shb, MuscleId::Brd];

    /// Lower-case tag used in file headers (`lhb`, `shb`, `brd`).
    pub fn tag(self) -> &'static str {
        match self {
            MuscleId::Lhb => "lhb",
            MuscleId::Shb => "shb",
            MuscleId::Brd => "brd",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        MuscleId::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(tag))
    }
}

impl fmt::Display for MuscleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MuscleId::Lhb => "LHB",
            MuscleId::Shb => "SHB",
            MuscleId::Brd => "BRD",
        };
        f.write_str(s)
    }
}

/// Per-muscle geometry and force constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleParams {
    pub id: MuscleId,
    /// MTU length at the start of the stretch, m.
    pub l0: f64,
    /// MTU excursion over the full stretch, m.
    pub lr: f64,
    /// Maximal contraction velocity, m/s.
    pub v_max: f64,
    /// Maximal muscle force, N (1.2 x the static maximum).
    pub f_max: f64,
    /// Optimal fiber length, m. Always `v_max / 1.5`.
    pub l_opt: f64,
    /// Rigid tendon length, m.
    pub tendon_slack: f64,
    /// Activation rise time constant, s.
    pub tau_act: f64,
    /// Activation fall time constant, s.
    pub tau_deact: f64,
}

pub const DEFAULT_TAU_ACT: f64 = 0.015;
pub const DEFAULT_TAU_DEACT: f64 = 0.050;

impl MuscleParams {
    /// Builds a muscle from its MTU constants. The optimal fiber length is
    /// derived from `v_max` and the tendon slack is set so that the fiber
    /// sits at optimal length when `l_mtu == l0`.
    pub fn new(id: MuscleId, l0: f64, lr: f64, v_max: f64, f_max: f64) -> Result<Self> {
        let l_opt = v_max / 1.5;
        let p = MuscleParams {
            id,
            l0,
            lr,
            v_max,
            f_max,
            l_opt,
            tendon_slack: l0 - l_opt,
            tau_act: DEFAULT_TAU_ACT,
            tau_deact: DEFAULT_TAU_DEACT,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn lhb() -> Self {
        Self::new(MuscleId::Lhb, 0.36, 0.054, 0.18, 729.0).expect("stock LHB")
    }

    pub fn shb() -> Self {
        Self::new(MuscleId::Shb, 0.28, 0.054, 0.20, 508.0).expect("stock SHB")
    }

    pub fn brd() -> Self {
        Self::new(MuscleId::Brd, 0.12, 0.024, 0.13, 1171.0).expect("stock BRD")
    }

    pub fn stock(id: MuscleId) -> Self {
        match id {
            MuscleId::Lhb => Self::lhb(),
            MuscleId::Shb => Self::shb(),
            MuscleId::Brd => Self::brd(),
        }
    }

    /// Static maximal isometric force, `f_max / 1.2`.
    pub fn f_static(&self) -> f64 {
        self.f_max / 1.2
    }

    /// Normalized fiber length for a given MTU length.
    pub fn normalized_fiber_length(&self, l_mtu: f64) -> Result<f64> {
        if !l_mtu.is_finite() {
            return Err(Error::NonFinite("normalized_fiber_length"));
        }
        if l_mtu <= self.tendon_slack {
            return Err(Error::FiberLength {
                l_mtu,
                tendon_slack: self.tendon_slack,
            });
        }
        Ok((l_mtu - self.tendon_slack) / self.l_opt)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l0", self.l0),
            ("lr", self.lr),
            ("v_max", self.v_max),
            ("f_max", self.f_max),
            ("tau_act", self.tau_act),
            ("tau_deact", self.tau_deact),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite and > 0",
                });
            }
        }
        if self.l_opt != self.v_max / 1.5 {
            return Err(Error::InvalidParameter {
                name: "l_opt",
                reason: "must equal v_max / 1.5",
            });
        }
        if !(self.tendon_slack.is_finite() && self.tendon_slack >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "tendon_slack",
                reason: "must be finite and >= 0",
            });
        }
        if self.tau_act >= self.tau_deact {
            return Err(Error::InvalidParameter {
                name: "tau_act",
                reason: "activation must rise faster than it falls",
            });
        }
        Ok(())
    }
}

/// Instantaneous state of one muscle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MuscleState {
    pub activation: f64,
    pub l_mtu: f64,
    /// Positive when lengthening.
    pub v_mtu: f64,
    pub force: f64,
}

/// Shape constants of the normalized Hill curves, shared by all muscles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillCurves {
    /// Gaussian width of the active force-length curve.
    pub fl_width: f64,
    /// Eccentric force-velocity asymptote.
    pub fv_eccentric_max: f64,
    /// Curvature of the concentric hyperbola (Hill's a/F0).
    pub fv_curvature: f64,
    /// Exponential stiffness of the passive element.
    pub k_pe: f64,
    /// Passive force scale relative to the static maximal force.
    pub f_pe_scale: f64,
}

impl Default for HillCurves {
    fn default() -> Self {
        HillCurves {
            fl_width: 0.45,
            fv_eccentric_max: 1.4,
            fv_curvature: 0.25,
            k_pe: 4.0,
            f_pe_scale: 0.4,
        }
    }
}

impl HillCurves {
    /// Active force-length multiplier, `exp(-(l - 1)^2 / width)`.
    pub fn force_length(&self, l_norm: f64) -> Result<f64> {
        if !l_norm.is_finite() {
            return Err(Error::NonFinite("force_length"));
        }
        if l_norm <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "l_norm",
                reason: "must be > 0",
            });
        }
        let d = l_norm - 1.0;
        Ok(exp(-d * d / self.fl_width))
    }

    /// Force-velocity multiplier; `v_norm = v_mtu / v_max`, lengthening positive.
    ///
    /// The concentric branch is Hill's hyperbola `(1 + v) / (1 - v / k)`.
    /// The eccentric branch `fmax - (fmax - 1) / (1 + v / c)` approaches
    /// `fmax`; `c` is picked so the slope is continuous at `v = 0`.
    pub fn force_velocity(&self, v_norm: f64) -> Result<f64> {
        if !v_norm.is_finite() {
            return Err(Error::NonFinite("force_velocity"));
        }
        let k = self.fv_curvature;
        Ok(if v_norm <= -1.0 {
            0.0
        } else if v_norm < 0.0 {
            (1.0 + v_norm) / (1.0 - v_norm / k)
        } else {
            let excess = self.fv_eccentric_max - 1.0;
            let c = excess / (1.0 + 1.0 / k);
            self.fv_eccentric_max - excess / (1.0 + v_norm / c)
        })
    }

    /// Passive multiplier, zero at or below slack and 1 at `l_norm = 1.5`.
    pub fn passive_force(&self, l_norm: f64) -> f64 {
        if l_norm <= 1.0 {
            return 0.0;
        }
        (exp(self.k_pe * (l_norm - 1.0)) - 1.0) / (exp(self.k_pe * 0.5) - 1.0)
    }

    /// Total MTU force in newtons, clamped to `[0, f_max]`.
    pub fn muscle_force(
        &self,
        activation: f64,
        l_mtu: f64,
        v_mtu: f64,
        params: &MuscleParams,
    ) -> Result<f64> {
        if !(activation.is_finite() && v_mtu.is_finite()) {
            return Err(Error::NonFinite("muscle_force"));
        }
        let l_norm = params.normalized_fiber_length(l_mtu)?;
        let active = activation * self.force_length(l_norm)? * self.force_velocity(v_mtu / params.v_max)?;
        let passive = self.f_pe_scale * self.passive_force(l_norm);
        Ok((params.f_static() * (active + passive)).clamp(0.0, params.f_max))
    }
}

/// One step of first-order activation dynamics `da/dt = (E - a) / tau`.
///
/// The time constant is `tau_act` while `E >= a` and `tau_deact` otherwise.
/// The step uses the exact exponential solution for constant `E` over `dt`,
/// so it never overshoots the target.
pub fn activation_step(activation: f64, excitation: f64, dt: f64, params: &MuscleParams) -> f64 {
    let tau = if excitation >= activation {
        params.tau_act
    } else {
        params.tau_deact
    };
    let a = excitation + (activation - excitation) * exp(-dt / tau);
    a.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn stock_parameters() {
        let lhb = MuscleParams::lhb();
        assert_eq!(lhb.l_opt, 0.18 / 1.5);
        assert!(close(lhb.tendon_slack, 0.24, 1e-12));
        assert!(close(lhb.f_static(), 607.5, 1e-12));
        for id in MuscleId::ALL {
            let m = MuscleParams::stock(id);
            assert!(close(m.normalized_fiber_length(m.l0).unwrap(), 1.0, 1e-12));
            assert!(m.tau_act < m.tau_deact);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(MuscleParams::new(MuscleId::Lhb, 0.0, 0.05, 0.18, 700.0).is_err());
        assert!(MuscleParams::new(MuscleId::Lhb, 0.3, -0.05, 0.18, 700.0).is_err());
        let mut m = MuscleParams::lhb();
        m.tau_act = 0.06;
        assert!(m.validate().is_err());
    }

    #[test]
    fn force_length_values() {
        let c = HillCurves::default();
        assert_eq!(c.force_length(1.0).unwrap(), 1.0);
        assert!(close(c.force_length(1.3).unwrap(), 0.818_730_753_077_981_8, 1e-12));
        assert!(close(c.force_length(0.5).unwrap(), 0.573_753_420_737_433_5, 1e-12));
        assert!(c.force_length(f64::NAN).is_err());
        assert!(c.force_length(f64::INFINITY).is_err());
        assert!(c.force_length(0.0).is_err());
    }

    #[test]
    fn force_velocity_values() {
        let c = HillCurves::default();
        assert_eq!(c.force_velocity(0.0).unwrap(), 1.0);
        assert_eq!(c.force_velocity(-1.0).unwrap(), 0.0);
        assert_eq!(c.force_velocity(-3.0).unwrap(), 0.0);
        // c = 0.4 / 5 = 0.08, so 1.4 - 0.4 / (1 + 6.25)
        let v = c.force_velocity(0.5).unwrap();
        assert!(v > 1.0 && v < 1.4);
        assert!(close(v, 1.4 - 0.4 / 7.25, 1e-12));
        assert!(c.force_velocity(f64::NAN).is_err());
    }

    #[test]
    fn force_velocity_slope_continuous_at_zero() {
        let c = HillCurves::default();
        let h = 1e-7;
        let left = (c.force_velocity(0.0).unwrap() - c.force_velocity(-h).unwrap()) / h;
        let right = (c.force_velocity(h).unwrap() - c.force_velocity(0.0).unwrap()) / h;
        assert!(close(left, right, 1e-4), "{left} vs {right}");
    }

    #[test]
    fn passive_force_values() {
        let c = HillCurves::default();
        assert_eq!(c.passive_force(1.0), 0.0);
        assert_eq!(c.passive_force(0.7), 0.0);
        assert!(close(c.passive_force(1.5), 1.0, 1e-12));
        let e = core::f64::consts::E;
        let expected = (e - 1.0) / (e * e - 1.0);
        assert!(close(expected, 0.2689, 5e-5));
        assert!(close(c.passive_force(1.25), expected, 1e-12));
    }

    #[test]
    fn muscle_force_isometric_optimal() {
        let c = HillCurves::default();
        let lhb = MuscleParams::lhb();
        let l = lhb.tendon_slack + lhb.l_opt;
        assert!(close(c.muscle_force(1.0, l, 0.0, &lhb).unwrap(), 607.5, 1e-9));
        for id in MuscleId::ALL {
            let m = MuscleParams::stock(id);
            assert_eq!(c.muscle_force(0.0, m.tendon_slack + m.l_opt, 0.0, &m).unwrap(), 0.0);
        }
    }

    #[test]
    fn muscle_force_composed_by_hand() {
        let c = HillCurves::default();
        let lhb = MuscleParams::lhb();
        let l_mtu = lhb.tendon_slack + 1.2 * lhb.l_opt;
        // Independent evaluation of each curve from its closed form.
        let fl = (-(0.2f64 * 0.2) / 0.45).exp();
        let vn = 0.05 / 0.18;
        let fv = 1.4 - 0.4 / (1.0 + vn / 0.08);
        let fpe = ((4.0f64 * 0.2).exp() - 1.0) / ((4.0f64 * 0.5).exp() - 1.0);
        let expected = 729.0 / 1.2 * (0.5 * fl * fv + 0.4 * fpe);
        let got = c.muscle_force(0.5, l_mtu, 0.05, &lhb).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn muscle_force_errors_on_slack_tendon() {
        let c = HillCurves::default();
        let lhb = MuscleParams::lhb();
        assert!(matches!(
            c.muscle_force(0.5, lhb.tendon_slack, 0.0, &lhb),
            Err(Error::FiberLength { .. })
        ));
    }

    #[test]
    fn muscle_force_clamped_to_f_max() {
        let c = HillCurves::default();
        let lhb = MuscleParams::lhb();
        let f = c.muscle_force(1.0, lhb.tendon_slack + 1.6 * lhb.l_opt, 2.0, &lhb).unwrap();
        assert_eq!(f, lhb.f_max);
    }

    #[test]
    fn activation_fixed_point_and_step_response() {
        let m = MuscleParams::lhb();
        assert_eq!(activation_step(0.3, 0.3, 0.001, &m), 0.3);

        let dt = 0.001;
        let mut a = 0.0;
        let n = (m.tau_act / dt).round() as usize;
        for _ in 0..n {
            a = activation_step(a, 1.0, dt, &m);
        }
        assert!(close(a, 1.0 - (-1.0f64).exp(), 1e-9), "rise {a}");

        let mut a = 1.0;
        let n = (m.tau_deact / dt).round() as usize;
        for _ in 0..n {
            a = activation_step(a, 0.0, dt, &m);
        }
        assert!(close(a, (-1.0f64).exp(), 1e-9), "fall {a}");
    }

    #[test]
    fn muscle_tags_round_trip() {
        for id in MuscleId::ALL {
            assert_eq!(MuscleId::from_tag(id.tag()), Some(id));
        }
        assert_eq!(MuscleId::from_tag("tri"), None);
    }
}
