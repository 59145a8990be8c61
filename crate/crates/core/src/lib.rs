//! Biased random walks on Galton-Watson trees.
//!
//! The crate computes the speed of the λ-biased walk on a supercritical
//! Galton-Watson tree from the conductance formula, from direct simulation,
//! and from regeneration and stationary-drift estimators, and ships exact
//! oracles for the reversal and invariant-measure identities behind them.

pub mod conductance;
pub mod envlab;
pub mod offspring;
pub mod seed;
pub mod speed;
pub mod stats;
pub mod tree;
pub mod walk;

pub use offspring::{LawError, LawStats, OffspringLaw, RegimeError};
pub use seed::Seed;
