use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("fiber length is non-positive (l_mtu {l_mtu} <= tendon slack {tendon_slack})")]
    FiberLength { l_mtu: f64, tendon_slack: f64 },

    #[error("joint angle {theta} rad outside modelled range [{min}, {max}]")]
    AngleOutOfRange { theta: f64, min: f64, max: f64 },

    #[error("time step changed mid-trial (buffer built for {expected} s, got {got} s)")]
    TimeStepChanged { expected: f64, got: f64 },

    #[error("baseline trial must have all reflex gains at zero")]
    BaselineHasReflex,

    #[error("grid node {theta} rad lies outside the data support [{min}, {max}]")]
    OutsideSupport { theta: f64, min: f64, max: f64 },

    #[error("curves share no angular support")]
    DisjointSupport,

    #[error("trial has no usable samples in the constant-velocity window")]
    EmptyWindow,

    #[error("no free reflex gain to fit")]
    NoFreeGain,

    #[error("no fit targets supplied")]
    NoTargets,
}
