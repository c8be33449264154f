//! Command-line companion to `reflexsim-core`: configuration files, CSV
//! records, batch protocols, fitting and SVG charts.

pub mod cli;
pub mod config;
mod error;
pub mod io;
pub mod plot;
pub mod protocol;

pub use error::{AppError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
/// `run` finished but the trial diverged.
pub const EXIT_DIVERGED: i32 = 2;
