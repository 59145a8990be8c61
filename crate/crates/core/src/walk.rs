//! The λ-biased walk, trajectories, fresh and regeneration epochs, and the
//! two walks on double trees.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;

use rand::Rng;

use crate::tree::double::{DVertex, DoubleTree};
use crate::tree::{LazyTree, NodeId, TreeArena, TreeError};

/// Probability of one step `from → to` of the walk on `T_*`; zero when the
/// vertices are not adjacent.
pub fn transition_probability<T: LazyTree>(tree: &mut T, from: &T::Node, to: &T::Node, lambda: f64) -> f64 {
    if tree.is_star(from) {
        return if *to == tree.root() { 1.0 } else { 0.0 };
    }
    let nu = tree.child_count(from);
    let z = lambda + nu as f64;
    if tree.parent(from).as_ref() == Some(to) {
        return lambda / z;
    }
    if tree.parent(to).as_ref() == Some(from) {
        return 1.0 / z;
    }
    0.0
}

/// One step from `current`: parent with weight `λ`, each child with weight 1;
/// `e_*` always moves to `e`.
pub fn step<T: LazyTree, R: Rng + ?Sized>(tree: &mut T, current: &T::Node, lambda: f64, rng: &mut R) -> T::Node {
    if tree.is_star(current) {
        return tree.root();
    }
    let nu = tree.child_count(current);
    let u = rng.random::<f64>() * (lambda + nu as f64);
    if u < lambda {
        tree.parent(current).expect("non-star vertex has a parent")
    } else {
        let i = ((u - lambda) as usize).min(nu - 1);
        tree.child(current, i)
    }
}

/// [`step`] specialised to arenas; this is the inner loop of every
/// estimator.
#[inline]
pub fn step_arena<R: Rng + ?Sized>(arena: &mut TreeArena, current: NodeId, lambda: f64, rng: &mut R) -> NodeId {
    if current == NodeId::STAR {
        return NodeId::ROOT;
    }
    let nu = arena.child_count(current);
    let u = rng.random::<f64>() * (lambda + nu as f64);
    if u < lambda {
        arena.parent(current).expect("non-star vertex has a parent")
    } else {
        let i = ((u - lambda) as usize).min(nu - 1);
        arena.child_id(current, i)
    }
}

/// `n_steps` steps from `start` on an arena; returns the visited sequence
/// (length `n_steps + 1`).
pub fn walk_arena<R: Rng + ?Sized>(
    arena: &mut TreeArena,
    start: NodeId,
    lambda: f64,
    n_steps: usize,
    rng: &mut R,
) -> Vec<NodeId> {
    let mut path = Vec::with_capacity(n_steps + 1);
    let mut cur = start;
    path.push(cur);
    for _ in 0..n_steps {
        cur = step_arena(arena, cur, lambda, rng);
        path.push(cur);
    }
    path
}

/// A visited sequence together with directed edge-crossing counts.
#[derive(Clone, Debug)]
pub struct Trajectory<N: Clone + Eq + Hash> {
    nodes: Vec<N>,
    lambda: f64,
    crossings: HashMap<(N, N), u64>,
}

impl<N: Clone + Eq + Hash> Trajectory<N> {
    pub fn new(start: N, lambda: f64) -> Self {
        Trajectory {
            nodes: vec![start],
            lambda,
            crossings: HashMap::new(),
        }
    }

    /// Builds a trajectory from a full sequence. Adjacency is not checked.
    pub fn from_nodes(nodes: Vec<N>, lambda: f64) -> Self {
        assert!(!nodes.is_empty(), "a trajectory has a start");
        let crossings = recount(&nodes);
        Trajectory { nodes, lambda, crossings }
    }

    pub fn push(&mut self, next: N) {
        let last = self.nodes.last().expect("non-empty").clone();
        *self.crossings.entry((last, next.clone())).or_insert(0) += 1;
        self.nodes.push(next);
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn start(&self) -> &N {
        &self.nodes[0]
    }

    pub fn last(&self) -> &N {
        self.nodes.last().expect("non-empty")
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    /// `N(y, z)`: number of crossings of the directed edge `y → z`.
    pub fn crossings(&self, y: &N, z: &N) -> u64 {
        self.crossings.get(&(y.clone(), z.clone())).copied().unwrap_or(0)
    }

    pub fn crossing_counts(&self) -> &HashMap<(N, N), u64> {
        &self.crossings
    }

    /// True when the incremental counts match a recount from the sequence.
    pub fn counts_consistent(&self) -> bool {
        recount(&self.nodes) == self.crossings
    }

    /// Debug dump: `step,vertex,depth` lines with a header.
    pub fn to_csv<F: Fn(&N) -> (String, i64)>(&self, label: F) -> String {
        let mut s = String::from("step,vertex,depth\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let (name, depth) = label(n);
            writeln!(s, "{i},{name},{depth}").expect("write to string");
        }
        s
    }
}

fn recount<N: Clone + Eq + Hash>(nodes: &[N]) -> HashMap<(N, N), u64> {
    let mut m = HashMap::new();
    for w in nodes.windows(2) {
        *m.entry((w[0].clone(), w[1].clone())).or_insert(0) += 1;
    }
    m
}

/// Runs `n_steps` steps from `start`, keeping crossing counts.
pub fn run_walk<T: LazyTree, R: Rng + ?Sized>(
    tree: &mut T,
    lambda: f64,
    n_steps: usize,
    start: T::Node,
    rng: &mut R,
) -> Trajectory<T::Node> {
    let mut traj = Trajectory::new(start.clone(), lambda);
    let mut cur = start;
    for _ in 0..n_steps {
        cur = step(tree, &cur, lambda, rng);
        traj.push(cur.clone());
    }
    traj
}

/// Fresh epochs `θ_k` and fresh points `ξ_k`, regeneration epochs `Γ_k`,
/// and the number of regeneration candidates censored near the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochList<N> {
    pub fresh: Vec<usize>,
    pub fresh_points: Vec<N>,
    pub regen: Vec<usize>,
    pub censored: usize,
}

/// `θ_0 = 0` and `θ_k` is the first time the `(k+1)`-th distinct vertex is
/// visited.
pub fn fresh_epochs<N: Clone + Eq + Hash>(nodes: &[N]) -> (Vec<usize>, Vec<N>) {
    let mut seen = HashSet::new();
    let mut theta = Vec::new();
    let mut xi = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        if seen.insert(n.clone()) {
            theta.push(i);
            xi.push(n.clone());
        }
    }
    (theta, xi)
}

/// Regeneration epochs of a finite trajectory: fresh epochs `ℓ` with
/// `X_ℓ ≠ e_*` whose parent is not visited after time `ℓ`. Candidates with
/// `ℓ > n − tail_buffer` are counted as censored instead.
pub fn regeneration_epochs<N, P>(nodes: &[N], parent: P, is_star: impl Fn(&N) -> bool, tail_buffer: usize) -> EpochList<N>
where
    N: Clone + Eq + Hash,
    P: Fn(&N) -> Option<N>,
{
    let n = nodes.len() - 1;
    let mut last_visit: HashMap<&N, usize> = HashMap::new();
    for (i, v) in nodes.iter().enumerate() {
        last_visit.insert(v, i);
    }
    let (fresh, fresh_points) = fresh_epochs(nodes);
    let mut regen = Vec::new();
    let mut censored = 0;
    for (&l, x) in fresh.iter().zip(&fresh_points) {
        if is_star(x) {
            continue;
        }
        let p = parent(x).expect("non-star vertex has a parent");
        let clean = last_visit.get(&p).is_none_or(|&t| t < l);
        if !clean {
            continue;
        }
        if l + tail_buffer > n {
            censored += 1;
        } else {
            regen.push(l);
        }
    }
    EpochList {
        fresh,
        fresh_points,
        regen,
        censored,
    }
}

/// [`regeneration_epochs`] for arena paths, with dense bookkeeping indexed by
/// node id.
pub fn arena_epochs(arena: &TreeArena, path: &[NodeId], tail_buffer: usize) -> EpochList<NodeId> {
    let n = path.len() - 1;
    let mut last_visit = vec![u32::MAX; arena.len()];
    let mut fresh = Vec::new();
    let mut fresh_points = Vec::new();
    for (i, v) in path.iter().enumerate() {
        let slot = &mut last_visit[v.index()];
        if *slot == u32::MAX {
            fresh.push(i);
            fresh_points.push(*v);
        }
        *slot = i as u32;
    }
    let mut regen = Vec::new();
    let mut censored = 0;
    for (&l, &x) in fresh.iter().zip(&fresh_points) {
        let Some(p) = arena.parent(x) else { continue };
        let t = last_visit[p.index()];
        if t != u32::MAX && t as usize >= l {
            continue;
        }
        if l + tail_buffer > n {
            censored += 1;
        } else {
            regen.push(l);
        }
    }
    EpochList {
        fresh,
        fresh_points,
        regen,
        censored,
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// One step of `Y`: weight `λ` to the `Y`-parent (the roots `e⁺`, `e⁻` are
/// each other's parent) and 1 to each child.
pub fn double_step_y<T: LazyTree, R: Rng + ?Sized>(
    dt: &mut DoubleTree<T>,
    v: &DVertex<T::Node>,
    lambda: f64,
    rng: &mut R,
) -> DVertex<T::Node> {
    let t = dt.tree_mut(v.side);
    let nu = t.child_count(&v.node);
    let u = rng.random::<f64>() * (lambda + nu as f64);
    if u < lambda {
        dt.y_parent(v)
    } else {
        let i = ((u - lambda) as usize).min(nu - 1);
        DVertex {
            side: v.side,
            node: t.child(&v.node, i),
        }
    }
}

/// The walk `Y` on a double tree, started at `e⁺`.
pub fn double_walk_y<T: LazyTree, R: Rng + ?Sized>(
    dt: &mut DoubleTree<T>,
    lambda: f64,
    n_steps: usize,
    rng: &mut R,
) -> Trajectory<DVertex<T::Node>> {
    let mut cur = dt.root();
    let mut traj = Trajectory::new(cur.clone(), lambda);
    for _ in 0..n_steps {
        cur = double_step_y(dt, &cur, lambda, rng);
        traj.push(cur.clone());
    }
    traj
}

/// The walk `Y^{(r)}` on a double tree, started at `e⁺`: weight `λ` toward
/// the r-parent, 1 to the other neighbors, reflected at `r⁻`, never entering
/// the strict descendants of `r⁻`.
pub fn double_walk_yr<T: LazyTree, R: Rng + ?Sized>(
    dt: &mut DoubleTree<T>,
    r: &T::Node,
    lambda: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Trajectory<DVertex<T::Node>>, TreeError> {
    let mut cur = dt.root();
    let mut traj = Trajectory::new(cur.clone(), lambda);
    for _ in 0..n_steps {
        let t = dt.yr_transitions(&cur, r, lambda)?;
        let w: Vec<f64> = t.iter().map(|(_, p)| *p).collect();
        cur = t[sample_index(&w, rng)].0.clone();
        traj.push(cur.clone());
    }
    Ok(traj)
}
