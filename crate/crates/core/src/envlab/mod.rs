//! Verification laboratory: exact oracles for path probabilities and hitting
//! probabilities, enumeration of small trees and walks, and checks of the
//! reversal and invariant-measure identities.

pub mod enumerate;
pub mod invariant;
pub mod oracle;
pub mod reversal;

use thiserror::Error;

use crate::conductance::ConductanceError;
use crate::speed::SpeedError;
use crate::tree::TreeError;

pub use enumerate::{
    enumerate_trees, lemma21_stat_check, verify_prop32, Lemma21Report, Prop32Report, WeightedTree, WeightedTreeEnsemble,
    DEFAULT_SHAPE_BUDGET,
};
pub use invariant::{
    density_weight, empirical_degree_law, green_sum_check, predicted_degree_law, DegreeLaw, DegreeSource, GreenCheck,
};
pub use oracle::{
    absorbing_hit_prob, beta_n_linear, path_probability, path_probability_y, path_probability_yr, StateGraph,
};
pub use reversal::{lemma31_sweep, lemma43_sweep, verify_lemma31, verify_lemma43, SweepReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("{what} exceed the budget of {budget}")]
    Budget { what: &'static str, budget: usize },
    #[error("{0}")]
    Domain(String),
    #[error("density denominator {0} is not positive")]
    NonpositiveDenominator(f64),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(usize),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Conductance(#[from] ConductanceError),
    #[error(transparent)]
    Speed(#[from] SpeedError),
}
