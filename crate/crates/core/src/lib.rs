//! Spine machinery for branching processes.
//!
//! Moments of `k`-fold sums over the particles of a branching process can be
//! computed either by simulating the whole population or by simulating only
//! `k` spines under a changed measure and weighting them. This crate provides
//! both routes, for branching Brownian motion and chain-driven branching in
//! continuous time and for Galton-Watson processes in discrete time, together
//! with an exact enumeration oracle for the discrete identity and closed forms
//! for the Brownian moments.

pub mod error;
pub mod estimators;
pub mod laws;
pub mod parallel;
pub mod sim_ct;
pub mod sim_dt;
pub mod tree;
mod util;

pub use error::{Error, Result};
pub use estimators::EstimateReport;
pub use parallel::Execution;
pub use util::KahanSum;

/// Crate version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
