//! Exact oracles: products of one-step probabilities and hitting
//! probabilities of finite chains by a dense linear solve.

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};

use super::EnvError;
use crate::tree::double::DoubleTree;
use crate::tree::{DVertex, ExplicitTree, LazyTree, Vertex};
use crate::walk::transition_probability;

/// Probability that the walk on `T_*` follows `path` (started at its first
/// vertex). An empty or one-vertex path has probability 1.
pub fn path_probability<T: LazyTree>(tree: &mut T, path: &[T::Node], lambda: f64) -> Result<f64, EnvError> {
    let mut p = 1.0;
    for w in path.windows(2) {
        let q = transition_probability(tree, &w[0], &w[1], lambda);
        if q == 0.0 {
            return Err(EnvError::InvalidPath(format!("{:?} -> {:?} is not an edge", w[0], w[1])));
        }
        p *= q;
    }
    Ok(p)
}

/// Probability that the double-tree walk `Y` follows `path`.
pub fn path_probability_y<T: LazyTree>(
    dt: &mut DoubleTree<T>,
    path: &[DVertex<T::Node>],
    lambda: f64,
) -> Result<f64, EnvError> {
    let mut p = 1.0;
    for w in path.windows(2) {
        let q = dt
            .y_transitions(&w[0], lambda)
            .into_iter()
            .find(|(v, _)| *v == w[1])
            .map(|(_, q)| q)
            .ok_or_else(|| EnvError::InvalidPath(format!("{:?} -> {:?} is not an edge", w[0], w[1])))?;
        p *= q;
    }
    Ok(p)
}

/// Probability that `Y^{(r)}` follows `path`.
pub fn path_probability_yr<T: LazyTree>(
    dt: &mut DoubleTree<T>,
    r: &T::Node,
    path: &[DVertex<T::Node>],
    lambda: f64,
) -> Result<f64, EnvError> {
    let mut p = 1.0;
    for w in path.windows(2) {
        let t = dt
            .yr_transitions(&w[0], r, lambda)
            .map_err(|e| EnvError::InvalidPath(e.to_string()))?;
        let q = t
            .into_iter()
            .find(|(v, _)| *v == w[1])
            .map(|(_, q)| q)
            .ok_or_else(|| EnvError::InvalidPath(format!("{:?} -> {:?} is not allowed", w[0], w[1])))?;
        p *= q;
    }
    Ok(p)
}

/// A finite Markov chain given by its transition lists.
#[derive(Clone, Debug)]
pub struct StateGraph<S> {
    states: Vec<S>,
    index: HashMap<S, usize>,
    moves: Vec<Vec<(usize, f64)>>,
}

impl<S: Clone + Eq + Hash + std::fmt::Debug> StateGraph<S> {
    pub fn new(states: Vec<S>) -> Self {
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let moves = vec![Vec::new(); states.len()];
        StateGraph { states, index, moves }
    }

    pub fn add_move(&mut self, from: &S, to: &S, p: f64) {
        let i = self.index[from];
        let j = self.index[to];
        self.moves[i].push((j, p));
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }
}

impl StateGraph<Vertex> {
    /// The walk on an explicit tree. Leaves of a truncated tree get no
    /// child moves, which is harmless when they are made absorbing.
    pub fn from_tree(tree: &ExplicitTree, lambda: f64) -> Self {
        let mut g = StateGraph::new(tree.vertices().collect());
        let mut t = tree;
        for v in tree.vertices() {
            for u in tree.neighbors(&v) {
                let p = transition_probability(&mut t, &v, &u, lambda);
                g.add_move(&v, &u, p);
            }
        }
        g
    }
}

/// `P_s(hit `hit` before `avoid`)` for every state `s`, by solving the
/// harmonic equations on the remaining states.
pub fn absorbing_hit_prob<S: Clone + Eq + Hash + std::fmt::Debug>(
    g: &StateGraph<S>,
    hit: &[S],
    avoid: &[S],
) -> Result<HashMap<S, f64>, EnvError> {
    let n = g.states.len();
    let mut kind = vec![0u8; n]; // 0 free, 1 hit, 2 avoid
    for s in hit {
        kind[g.index[s]] = 1;
    }
    for s in avoid {
        let i = g.index[s];
        if kind[i] == 1 {
            return Err(EnvError::Domain(format!("{s:?} is in both target sets")));
        }
        kind[i] = 2;
    }
    let free: Vec<usize> = (0..n).filter(|&i| kind[i] == 0).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }
    let m = free.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (k, &i) in free.iter().enumerate() {
        for &(j, p) in &g.moves[i] {
            match kind[j] {
                0 => a[(k, pos[j])] -= p,
                1 => b[k] += p,
                _ => {}
            }
        }
    }
    let x = if m == 0 {
        DVector::zeros(0)
    } else {
        a.lu().solve(&b).ok_or(EnvError::SingularSystem)?
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(EnvError::SingularSystem);
    }
    let mut out = HashMap::with_capacity(n);
    for (i, s) in g.states.iter().enumerate() {
        let v = match kind[i] {
            1 => 1.0,
            2 => 0.0,
            _ => x[pos[i]],
        };
        out.insert(s.clone(), v);
    }
    Ok(out)
}

/// `β_n(e)` of an explicit tree from the linear system: the probability that
/// the walk from `e` reaches generation `n` before `e_*`.
pub fn beta_n_linear(tree: &ExplicitTree, n: usize, lambda: f64) -> Result<f64, EnvError> {
    if n == 0 {
        return Ok(1.0);
    }
    let t = tree.truncate(n);
    let g = StateGraph::from_tree(&t, lambda);
    let hit: Vec<Vertex> = t.level(n).into_iter().map(Vertex::Node).collect();
    if hit.is_empty() {
        return Ok(0.0);
    }
    let h = absorbing_hit_prob(&g, &hit, &[Vertex::Star])?;
    Ok(h[&Vertex::root()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conductance::beta_n_exact;
    use crate::tree::word::w;
    use approx::assert_abs_diff_eq;

    fn v(s: &str) -> Vertex {
        s.parse().unwrap()
    }

    #[test]
    fn path_probability_examples() {
        let t = ExplicitTree::regular(2, 2);
        let mut tr = &t;
        assert_eq!(path_probability(&mut tr, &[v("e*"), v("e"), v("1")], 1.0).unwrap(), 1.0 / 3.0);
        assert_eq!(path_probability(&mut tr, &[], 1.0).unwrap(), 1.0);
        let chain = ExplicitTree::from_words([w("e"), w("1"), w("2"), w("11")]).unwrap();
        let mut c = &chain;
        assert_abs_diff_eq!(path_probability(&mut c, &[v("e"), v("1"), v("e")], 1.0).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert!(matches!(path_probability(&mut tr, &[v("e"), v("11")], 1.0), Err(EnvError::InvalidPath(_))));
    }

    #[test]
    fn gamblers_ruin() {
        let t = ExplicitTree::chain(3);
        let g = StateGraph::from_tree(&t, 1.0);
        let h = absorbing_hit_prob(&g, &[v("11")], &[v("e*")]).unwrap();
        assert_abs_diff_eq!(h[&v("e")], 1.0 / 3.0, epsilon = 1e-14);
        assert_eq!(h[&v("11")], 1.0);
        assert_eq!(h[&v("e*")], 0.0);
    }

    #[test]
    fn linear_system_matches_recursion() {
        for t in [ExplicitTree::regular(2, 4), ExplicitTree::regular(3, 3), ExplicitTree::chain(6)] {
            for n in 0..=t.height() {
                for lambda in [0.4, 1.0, 2.5] {
                    let a = beta_n_linear(&t, n, lambda).unwrap();
                    let b = beta_n_exact(&t, n, lambda);
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn closed_class_is_singular() {
        let mut g = StateGraph::new(vec![0, 1, 2]);
        g.add_move(&0, &0, 1.0);
        g.add_move(&1, &2, 1.0);
        assert!(matches!(absorbing_hit_prob(&g, &[2], &[]), Err(EnvError::SingularSystem)));
    }

    #[test]
    fn kernel_is_stochastic() {
        // total probability of all length-4 paths from e_* is 1
        let t = ExplicitTree::from_words([w("e"), w("1"), w("2"), w("11"), w("12"), w("13")]).unwrap();
        let mut paths = vec![vec![Vertex::Star]];
        for _ in 0..4 {
            paths = paths
                .into_iter()
                .flat_map(|p| {
                    let last = p.last().unwrap().clone();
                    t.neighbors(&last).into_iter().map(move |u| {
                        let mut q = p.clone();
                        q.push(u);
                        q
                    })
                })
                .collect();
        }
        let mut tr = &t;
        let total: f64 = paths.iter().map(|p| path_probability(&mut tr, p, 0.7).unwrap()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
    }
}
