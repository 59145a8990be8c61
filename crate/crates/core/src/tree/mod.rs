//! Rooted trees with the artificial parent `e_*`: words, explicit finite
//! trees, the lazily grown random arena, and double trees.

pub mod arena;
pub mod double;
pub mod explicit;
pub mod word;

use std::fmt::Debug;
use std::hash::Hash;

use thiserror::Error;

pub use arena::{NodeId, SharedArena, TreeArena};
pub use double::{DVertex, DoubleTree, Side};
pub use explicit::{psi, ExplicitTree};
pub use word::{Vertex, Word};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("vertex {0} is not in the tree")]
    NotInTree(String),
    #[error("word set violates the Neveu conditions: {0}")]
    NotNeveu(String),
    #[error("cannot parse {0:?} as a word")]
    Parse(String),
    #[error("r-parent undefined at {0}")]
    Undefined(String),
    #[error("outside the domain of the reversal map: {0}")]
    OutsideDomain(String),
    #[error("materialization exceeded the node budget of {budget}")]
    BudgetExceeded { budget: usize },
}

/// Read access to a rooted tree hanging below `e_*`, expanding on demand.
///
/// `child_count` and `child` take `&mut self` so that lazily grown trees can
/// materialize children the first time they are asked for.
pub trait LazyTree {
    type Node: Clone + Eq + Hash + Debug;

    fn star(&self) -> Self::Node;
    fn root(&self) -> Self::Node;
    /// `None` only for `e_*`.
    fn parent(&self, n: &Self::Node) -> Option<Self::Node>;
    /// `ν(n)`, with `ν(e_*) = 1`.
    fn child_count(&mut self, n: &Self::Node) -> usize;
    /// Child with zero-based index `i`.
    fn child(&mut self, n: &Self::Node, i: usize) -> Self::Node;
    fn depth(&self, n: &Self::Node) -> i64;

    fn is_star(&self, n: &Self::Node) -> bool {
        *n == self.star()
    }
}
