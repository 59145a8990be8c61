//! The escape probability `β` of a tree: the probability that the walk
//! started at the root never visits `e_*`.
//!
//! `β` is the fixed point of `β(x) = S/(λ + S)` with `S` the sum over the
//! children of `x`. Truncating at generation `n` with boundary value 1 gives
//! `β_n`, the probability of reaching generation `n` before `e_*`, which
//! decreases to `β` as `n` grows.

use serde::Serialize;
use thiserror::Error;

use crate::offspring::OffspringLaw;
use crate::seed::Seed;
use crate::tree::arena::{child_key, root_key};
use crate::tree::{ExplicitTree, NodeId, TreeArena, Vertex};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;
/// Vertices one sampling pass may visit; sampling keeps no tree in memory.
pub const DEFAULT_VISIT_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConductanceError {
    #[error("tree materialization exceeded the node budget of {budget} at depth {depth}")]
    DepthBudgetExceeded { budget: usize, depth: usize },
    #[error("regular-tree conductance needs 0 < lambda < b, got b = {b}, lambda = {lambda}")]
    Domain { b: u32, lambda: f64 },
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

/// Interval enclosing the conductance of a tree, computed from its
/// truncation at `depth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaBracket {
    pub lower: f64,
    pub upper: f64,
    pub depth: usize,
    /// The tree was fully materialized and is finite, so `β = 0`.
    pub exact_zero: bool,
}

impl BetaBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// `S/(λ + S)` with `S` the sum of the child values; 0 for a leaf.
pub fn beta_recursion_pass(child_values: &[f64], lambda: f64) -> f64 {
    let s: f64 = child_values.iter().sum();
    if s == 0.0 {
        0.0
    } else {
        s / (lambda + s)
    }
}

/// `β_n(e)` of an explicit tree: boundary value 1 on generation `n`, 0 on
/// leaves above it.
pub fn beta_n_exact(tree: &ExplicitTree, n: usize, lambda: f64) -> f64 {
    fn go(t: &ExplicitTree, v: &Vertex, left: usize, lambda: f64) -> f64 {
        if left == 0 {
            return 1.0;
        }
        let vals: Vec<f64> = t.children(v).iter().map(|c| go(t, c, left - 1, lambda)).collect();
        beta_recursion_pass(&vals, lambda)
    }
    go(tree, &Vertex::root(), n, lambda)
}

/// `β` of the regular tree where every vertex has `b` children.
pub fn beta_regular(b: u32, lambda: f64) -> Result<f64, ConductanceError> {
    if !(lambda > 0.0 && lambda < f64::from(b)) {
        return Err(ConductanceError::Domain { b, lambda });
    }
    Ok((f64::from(b) - lambda) / f64::from(b))
}

/// Where the profile computation gets its children from.
trait ChildSource {
    type Node: Copy;
    /// Appends the children of `n` to `out`; `Err` once the node budget is
    /// spent.
    fn children(&mut self, n: Self::Node, out: &mut Vec<Self::Node>) -> Result<(), ()>;
}

struct ArenaSource<'a> {
    arena: &'a mut TreeArena,
    budget: usize,
}

impl ChildSource for ArenaSource<'_> {
    type Node = NodeId;

    fn children(&mut self, n: NodeId, out: &mut Vec<NodeId>) -> Result<(), ()> {
        let kids = self.arena.expand(n);
        if self.arena.len() > self.budget {
            return Err(());
        }
        out.extend(kids.map(NodeId));
        Ok(())
    }
}

/// Regrows the tree from per-node keys without storing it: memory is
/// proportional to the depth, and the budget counts visited vertices.
struct KeyedSource<'a> {
    law: &'a OffspringLaw,
    visited: usize,
    budget: usize,
}

impl ChildSource for KeyedSource<'_> {
    type Node = u64;

    fn children(&mut self, key: u64, out: &mut Vec<u64>) -> Result<(), ()> {
        let k = self.law.sample_from_key(key);
        self.visited += k as usize;
        if self.visited > self.budget {
            return Err(());
        }
        out.extend((1..=k).map(|i| child_key(key, i)));
        Ok(())
    }
}

struct Profiler<S: ChildSource> {
    source: S,
    lambda: f64,
    boundary: f64,
    reached: bool,
    sums: Vec<Vec<f64>>,
    kids: Vec<Vec<S::Node>>,
}

impl<S: ChildSource> Profiler<S> {
    fn new(source: S, lambda: f64, boundary: f64, depth: usize) -> Self {
        Profiler {
            source,
            lambda,
            boundary,
            reached: false,
            sums: vec![Vec::new(); depth + 1],
            kids: (0..=depth).map(|_| Vec::new()).collect(),
        }
    }

    /// Adds the profile of `n` (values for boundary generations at relative
    /// distance `0..=r`) into `out`.
    fn accumulate(&mut self, n: S::Node, r: usize, out: &mut [f64]) -> Result<(), ()> {
        out[0] += self.boundary;
        if r == 0 {
            self.reached = true;
            return Ok(());
        }
        let mut kids = std::mem::take(&mut self.kids[r]);
        kids.clear();
        self.source.children(n, &mut kids)?;
        if !kids.is_empty() {
            let mut s = std::mem::take(&mut self.sums[r]);
            s.clear();
            s.resize(r, 0.0);
            for &c in &kids {
                self.accumulate(c, r - 1, &mut s)?;
            }
            for j in 1..=r {
                let sj = s[j - 1];
                if sj > 0.0 {
                    out[j] += sj / (self.lambda + sj);
                }
            }
            self.sums[r] = s;
        }
        self.kids[r] = kids;
        Ok(())
    }

    fn run(mut self, root: S::Node, depth: usize) -> Result<(Vec<f64>, bool), ()> {
        let mut out = vec![0.0; depth + 1];
        self.accumulate(root, depth, &mut out)?;
        Ok((out, self.reached))
    }
}

/// Truncated conductances of the root for every boundary generation
/// `d = 0..=depth` (with `profile[0]` equal to the boundary value), and
/// whether generation `depth` is non-empty.
pub fn beta_profile(
    arena: &mut TreeArena,
    lambda: f64,
    depth: usize,
    boundary: f64,
    budget: usize,
) -> Result<(Vec<f64>, bool), ConductanceError> {
    Profiler::new(ArenaSource { arena, budget }, lambda, boundary, depth)
        .run(NodeId::ROOT, depth)
        .map_err(|()| ConductanceError::DepthBudgetExceeded { budget, depth })
}

/// [`beta_profile`] for the tree grown from `seed`, without materializing
/// it. `budget` bounds the number of vertices visited.
pub fn beta_profile_keyed(
    law: &OffspringLaw,
    seed: Seed,
    lambda: f64,
    depth: usize,
    budget: usize,
) -> Result<(Vec<f64>, bool), ConductanceError> {
    let source = KeyedSource { law, visited: 1, budget };
    Profiler::new(source, lambda, 1.0, depth)
        .run(root_key(seed), depth)
        .map_err(|()| ConductanceError::DepthBudgetExceeded { budget, depth })
}

/// Certified bracket for `β` from the truncation at `depth`: the upper end
/// uses boundary value 1 on generation `depth` and the lower end boundary
/// value 0.
pub fn beta_bracket(
    arena: &mut TreeArena,
    lambda: f64,
    depth: usize,
    budget: usize,
) -> Result<BetaBracket, ConductanceError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ConductanceError::InvalidLambda(lambda));
    }
    let (up, reached) = beta_profile(arena, lambda, depth, 1.0, budget)?;
    let (low, _) = beta_profile(arena, lambda, depth, 0.0, budget)?;
    let exact_zero = !reached;
    Ok(BetaBracket {
        lower: if exact_zero { 0.0 } else { low[depth] },
        upper: if exact_zero { 0.0 } else { up[depth] },
        depth,
        exact_zero,
    })
}

/// Result of [`beta_of_arena`]: the estimate and how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaSample {
    pub value: f64,
    /// `β_depth`, an upper bound for the true value.
    pub upper: f64,
    /// Extrapolated remainder `β_depth − β`.
    pub tail: f64,
    pub depth: usize,
    pub exact_zero: bool,
}

const MIN_DEPTH: usize = 6;
const RATE_WINDOW: usize = 4;
const MAX_RATE: f64 = 0.98;

fn next_depth(d: usize) -> usize {
    d + 2 + d / 10
}

/// Geometric extrapolation of the remainder `β_D − β` from the last
/// decrements of the profile.
fn tail_estimate(profile: &[f64]) -> f64 {
    let d = profile.len() - 1;
    let delta = |k: usize| (profile[k - 1] - profile[k]).max(0.0);
    let last = delta(d);
    if last == 0.0 {
        return 0.0;
    }
    let w = RATE_WINDOW.min(d - 1);
    let earlier = delta(d - w);
    let rate = if earlier > 0.0 {
        (last / earlier).powf(1.0 / w as f64).min(MAX_RATE)
    } else {
        MAX_RATE
    };
    last * rate / (1.0 - rate)
}

fn check_inputs(lambda: f64, tol: f64) -> Result<(), ConductanceError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ConductanceError::InvalidLambda(lambda));
    }
    if !(tol > 0.0) {
        return Err(ConductanceError::InvalidTolerance(tol));
    }
    Ok(())
}

/// Deepens the truncation until the extrapolated remainder is below
/// `tol / 2` (or the tree is found finite) and returns `β_D` minus that
/// remainder.
fn deepen<F>(tol: f64, mut profile_at: F) -> Result<BetaSample, ConductanceError>
where
    F: FnMut(usize) -> Result<(Vec<f64>, bool), ConductanceError>,
{
    let mut depth = MIN_DEPTH;
    loop {
        let (profile, reached) = profile_at(depth)?;
        if !reached {
            return Ok(BetaSample {
                value: 0.0,
                upper: 0.0,
                tail: 0.0,
                depth,
                exact_zero: true,
            });
        }
        let tail = tail_estimate(&profile);
        if tail < 0.5 * tol {
            let upper = profile[depth];
            return Ok(BetaSample {
                value: (upper - tail).max(0.0),
                upper,
                tail,
                depth,
                exact_zero: false,
            });
        }
        depth = next_depth(depth);
    }
}

/// Conductance of the arena's tree to accuracy `tol`.
pub fn beta_of_arena(
    arena: &mut TreeArena,
    lambda: f64,
    tol: f64,
    budget: usize,
) -> Result<BetaSample, ConductanceError> {
    check_inputs(lambda, tol)?;
    deepen(tol, |d| beta_profile(arena, lambda, d, 1.0, budget))
}

/// Conductance of the tree grown from `seed` (the same tree a
/// [`TreeArena`] with that seed would hold), computed without storing it.
/// `budget` bounds the vertices visited by one pass.
pub fn beta_of_tree(
    law: &OffspringLaw,
    seed: Seed,
    lambda: f64,
    tol: f64,
    budget: usize,
) -> Result<BetaSample, ConductanceError> {
    check_inputs(lambda, tol)?;
    deepen(tol, |d| beta_profile_keyed(law, seed, lambda, d, budget))
}

/// One draw of `β(e)` for a fresh Galton-Watson tree grown from `seed`.
///
/// Laws with a single support point are handled in closed form.
pub fn sample_beta(law: &OffspringLaw, lambda: f64, tol: f64, seed: Seed, budget: usize) -> Result<f64, ConductanceError> {
    check_inputs(lambda, tol)?;
    if let Some(b) = law.degenerate() {
        return Ok(if b == 0 { 0.0 } else { ((f64::from(b) - lambda) / f64::from(b)).max(0.0) });
    }
    Ok(beta_of_tree(law, seed, lambda, tol, budget)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn recursion_pass_examples() {
        assert_eq!(beta_recursion_pass(&[], 1.0), 0.0);
        assert_abs_diff_eq!(beta_recursion_pass(&[1.0, 1.0], 1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(beta_recursion_pass(&[0.5, 0.5], 1.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn exact_truncations() {
        assert_abs_diff_eq!(beta_n_exact(&ExplicitTree::chain(3), 2, 1.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(beta_n_exact(&ExplicitTree::regular(2, 1), 1, 1.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(beta_n_exact(&ExplicitTree::chain(2), 3, 1.0), 0.0);
    }

    #[test]
    fn regular_closed_form() {
        assert_eq!(beta_regular(2, 1.0).unwrap(), 0.5);
        assert_eq!(beta_regular(2, 1.5).unwrap(), 0.25);
        assert_abs_diff_eq!(beta_regular(3, 1.0).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert!(beta_regular(2, 2.0).is_err());
    }

    #[test]
    fn bracket_on_binary_tree() {
        let mut a = TreeArena::new(OffspringLaw::deterministic(2), Seed(0));
        let b1 = beta_bracket(&mut a, 1.0, 1, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(b1.lower, 0.0);
        assert_abs_diff_eq!(b1.upper, 2.0 / 3.0, epsilon = 1e-15);
        assert!(b1.contains(0.5));
        let mut prev = b1.width();
        for d in 2..=16 {
            let b = beta_bracket(&mut a, 1.0, d, DEFAULT_NODE_BUDGET).unwrap();
            assert!(b.width() < prev);
            assert!(b.contains(0.5));
            prev = b.width();
        }
    }

    #[test]
    fn profile_matches_exact_truncations() {
        let law: OffspringLaw = "0:0.25,2:0.75".parse().unwrap();
        for s in 0..20 {
            let mut a = TreeArena::new(law.clone(), Seed(s));
            let (prof, _) = beta_profile(&mut a, 0.9, 7, 1.0, DEFAULT_NODE_BUDGET).unwrap();
            let t = a.to_explicit(7, DEFAULT_NODE_BUDGET).unwrap();
            for (d, &p) in prof.iter().enumerate() {
                assert_abs_diff_eq!(p, beta_n_exact(&t, d, 0.9), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn keyed_profile_matches_arena_profile() {
        let law: OffspringLaw = "0:0.3,1:0.2,3:0.5".parse().unwrap();
        for s in 0..20 {
            let mut a = TreeArena::new(law.clone(), Seed(s));
            let from_arena = beta_profile(&mut a, 1.1, 9, 1.0, DEFAULT_NODE_BUDGET).unwrap();
            let keyed = beta_profile_keyed(&law, Seed(s), 1.1, 9, DEFAULT_NODE_BUDGET).unwrap();
            assert_eq!(from_arena, keyed);
        }
    }

    #[test]
    fn finite_tree_is_exact_zero() {
        let mut a = TreeArena::new(OffspringLaw::deterministic(0), Seed(0));
        let b = beta_bracket(&mut a, 1.0, 3, 100).unwrap();
        assert!(b.exact_zero);
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn budget_is_enforced() {
        let mut a = TreeArena::new(OffspringLaw::deterministic(2), Seed(0));
        assert!(matches!(
            beta_bracket(&mut a, 1.0, 20, 1000),
            Err(ConductanceError::DepthBudgetExceeded { .. })
        ));
    }

    #[test]
    fn sampled_beta_regular_and_extinct() {
        let v = sample_beta(&OffspringLaw::deterministic(2), 1.0, 1e-6, Seed(1), DEFAULT_NODE_BUDGET).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 5e-7);
        let z = sample_beta(&OffspringLaw::deterministic(0), 1.0, 1e-6, Seed(1), DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn arena_estimate_on_regular_tree() {
        // Goes through the generic deepening path rather than the closed form.
        let mut a = TreeArena::new(OffspringLaw::deterministic(2), Seed(0));
        let s = beta_of_arena(&mut a, 0.5, 1e-6, DEFAULT_NODE_BUDGET).unwrap();
        assert_abs_diff_eq!(s.value, 0.75, epsilon = 1e-6);
        assert!(s.upper >= 0.75);
    }
}
