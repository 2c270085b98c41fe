//! Local observed-score test equating for non-equivalent groups.
//!
//! Three families of local linear equating transforms are provided:
//! anchor-conditioned, propensity-score stratified, and stratified inverse
//! probability weighting, plus an equipercentile generalization built on
//! weighted (optionally kernel-smoothed) empirical distribution functions.
//! The [`simulation`] and [`evaluation`] modules reproduce a 2PL Monte Carlo
//! study scoring each method against the analytic ability-conditional
//! transform.

pub mod equating;
pub mod error;
pub mod evaluation;
pub mod parallel;
pub mod propensity;
pub mod simulation;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
pub use parallel::Execution;
pub use types::{apply_linear, ExamineeRecord, Form, IndexKind, LinearTransform, TransformFamily, WeightedSample};
