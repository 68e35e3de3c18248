//! Streaming shrinkage covariance estimation with sequentially updated
//! inverse approximations.
//!
//! The pipeline per observation is:
//!
//! 1. [`stream::StreamState::observe`] updates the sample mean, the sample
//!    covariance `S` and the target scale `Tr(S)/p`, and hands back the
//!    innovation `d = x − m`.
//! 2. [`shrink`] recomputes the shrinkage coefficient and splits the next
//!    shrinkage estimator into a rank-one-updatable part `G` and a correction
//!    `F`.
//! 3. [`invupd`] carries an inverse of the estimator forward: exactly (a
//!    chain of `p` rank-one updates) or approximately (a single `α`-weighted
//!    correction term).
//!
//! [`sim`] wires these into the AR(1) Monte-Carlo benchmark.

pub mod error;
pub mod invupd;
pub mod linalg;
pub mod shrink;
pub mod sim;
pub mod stream;

pub use error::{Error, Result};
pub use invupd::{InverseState, StepInputs, Variant};
pub use linalg::{CholFactor, Matrix};
pub use shrink::{Estimate, GfSplit, ShrinkState};
pub use sim::{BoxSummary, ExperimentConfig, ExperimentSummary, LambdaMode, TrialTrace};
pub use stream::{Observation, StreamState};
