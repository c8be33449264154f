//! Forward-dynamics core for simulated robot-assisted elbow stretch trials.
//!
//! A single-joint elbow driven by three Hill-type flexors (LHB, SHB, BRD) is
//! extended by a position-controlled robot along a ramp-and-hold trajectory.
//! Each flexor carries a delayed stretch-reflex controller whose excitation
//! combines length, velocity and force feedback. The [`analysis`] module
//! decomposes the recorded robot torque into passive and reflex parts and
//! fits reflex parameters to reference torque curves.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod engine;
mod error;
pub mod fit;
pub mod muscle;
pub mod plant;
pub mod reflex;
pub mod robot;

pub use error::{Error, Result};

/// Degrees to radians.
#[inline]
pub fn deg(x: f64) -> f64 {
    x.to_radians()
}
