//! Gradient-free global optimization with consensus-based particle dynamics.
//!
//! A swarm of particles repeatedly relaxes toward a Gibbs-weighted average of
//! a randomly scheduled particle batch while carrying multiplicative noise
//! applied coordinate by coordinate, which keeps the contraction condition on
//! the drift and noise rates independent of the problem dimension. Losses can
//! be estimated from data mini-batches, so one update touches only a small
//! batch of particles and a small batch of samples.
//!
//! The crate provides the optimizer loop, baseline methods for comparison
//! (mini-batch SGD and the norm-coupled isotropic variant), benchmark
//! objectives, and moment diagnostics for checking contraction behavior.

pub mod baselines;
pub mod batching;
pub mod consensus;
pub mod diagnostics;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod objective;
pub mod objectives;
pub mod params;

pub use consensus::{
    argmin_consensus, laplace_estimate, weighted_consensus, ConsensusPoint,
};
pub use dynamics::{run_optimizer, CboRun, RunReport, StopReason, TraceEntry};
pub use ensemble::{Ensemble, InitSpec};
pub use error::CboError;
pub use objective::{KnownMin, Objective, Quadratic};
pub use params::{
    CboParams, ConsensusMode, HeavisideMode, Schedule, Scheme, StallConfig, UpdateMode,
};
