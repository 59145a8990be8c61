//! Exact time-reversal identities, checked path by path.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::oracle::{path_probability, path_probability_y, path_probability_yr};
use super::EnvError;
use crate::offspring::OffspringLaw;
use crate::seed::Seed;
use crate::tree::double::DoubleTree;
use crate::tree::{psi, DVertex, ExplicitTree, TreeArena, Vertex, Word};

/// Law used to grow the random trees of the sweeps.
const SWEEP_LAW: &str = "0:0.2,1:0.2,2:0.3,3:0.3";

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares the probability of a path `e_* → x` in `T_*` with that of the
/// `Ψ_x`-image of the reversed path in the backward tree `B_x(T_*)`.
///
/// Probabilities of long paths are tiny, so the residual is relative to the
/// larger of the two.
pub fn verify_lemma31(tree: &ExplicitTree, x: &Word, path: &[Vertex], lambda: f64) -> Result<f64, EnvError> {
    let target = Vertex::Node(x.clone());
    let ok_ends = path.first() == Some(&Vertex::Star) && path.last() == Some(&target) && path.len() >= 2;
    if !ok_ends {
        return Err(EnvError::InvalidPath("path must run from e_* to x".into()));
    }
    if path[1..path.len() - 1].iter().any(|v| v.is_star() || *v == target) {
        return Err(EnvError::InvalidPath("interior visits e_* or x".into()));
    }
    let mut t = tree;
    let forward = path_probability(&mut t, path, lambda)?;
    let back = tree.backward_tree(x)?;
    let image = path
        .iter()
        .rev()
        .map(|v| psi(x, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut b = &back;
    let backward = path_probability(&mut b, &image, lambda)?;
    Ok(relative_gap(forward, backward))
}

/// Compares `P(Y^{(r)} follows path)` with `λ^{−N(e⁺,e⁻)} P(Y follows path)`
/// for a closed path from `e⁺` avoiding `{u⁻ : u ≥ r}`.
pub fn verify_lemma43(
    dt: &mut DoubleTree<&ExplicitTree>,
    r: &Vertex,
    path: &[DVertex<Vertex>],
    lambda: f64,
) -> Result<f64, EnvError> {
    let root = dt.root();
    if path.first() != Some(&root) || path.last() != Some(&root) {
        return Err(EnvError::InvalidPath("path must start and end at e+".into()));
    }
    if path.iter().any(|v| dt.below_r(v, r)) {
        return Err(EnvError::InvalidPath("path enters the subtree of r-".into()));
    }
    let minus_root = DVertex::minus(Vertex::root());
    let crossings = path.windows(2).filter(|w| w[0] == root && w[1] == minus_root).count();
    let py = path_probability_y(dt, path, lambda)?;
    let pyr = path_probability_yr(dt, r, path, lambda)?;
    let rhs = lambda.powi(-(crossings as i32)) * py;
    Ok(relative_gap(pyr, rhs))
}

/// Summary of a randomized sweep.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepReport {
    pub instances: usize,
    pub max_residual: f64,
}

fn random_tree<R: Rng>(rng: &mut R, max_depth: usize) -> ExplicitTree {
    let law: OffspringLaw = SWEEP_LAW.parse().expect("valid sweep law");
    let depth = rng.random_range(1..=max_depth);
    let mut arena = TreeArena::new(law, Seed::new(rng.random()));
    arena.to_explicit(depth, 1 << 16).expect("small tree")
}

/// Geodesic from `from` to `to` excluding `from`.
fn geodesic(from: &Word, to: &Word) -> Vec<Vertex> {
    let a = from.common_prefix_len(to);
    let mut out = Vec::new();
    for len in (a..from.len()).rev() {
        out.push(Vertex::Node(from.prefix(len)));
    }
    for len in a + 1..=to.len() {
        out.push(Vertex::Node(to.prefix(len)));
    }
    out
}

/// A random instance for [`verify_lemma31`]: a tree, a vertex `x` and a path
/// `e_* → x` of length at most `max_len` whose interior avoids `e_*` and `x`.
pub fn random_lemma31_instance<R: Rng>(rng: &mut R, max_depth: usize, max_len: usize) -> (ExplicitTree, Word, Vec<Vertex>) {
    loop {
        let tree = random_tree(rng, max_depth);
        let words: Vec<Word> = tree.words().cloned().collect();
        let x = words[rng.random_range(0..words.len())].clone();
        let target = Vertex::Node(x.clone());
        let mut path = vec![Vertex::Star, Vertex::root()];
        if x.is_root() {
            return (tree, x, path);
        }
        let wander = rng.random_range(0..=max_len.saturating_sub(2 * max_depth));
        while path.len() - 1 < wander {
            let cur = path.last().unwrap().clone();
            let nb: Vec<Vertex> = tree
                .neighbors(&cur)
                .into_iter()
                .filter(|u| !u.is_star() && *u != target)
                .collect();
            if nb.is_empty() {
                break;
            }
            path.push(nb[rng.random_range(0..nb.len())].clone());
        }
        let cur = path.last().unwrap().word().unwrap().clone();
        path.extend(geodesic(&cur, &x));
        if path.len() - 1 <= max_len {
            return (tree, x, path);
        }
    }
}

/// A random instance for [`verify_lemma43`]: two trees, a vertex `r` of the
/// left tree and a closed path from `e⁺` avoiding `{u⁻ : u ≥ r}`.
pub fn random_lemma43_instance<R: Rng>(
    rng: &mut R,
    max_depth: usize,
    max_len: usize,
) -> (ExplicitTree, ExplicitTree, Vertex, Vec<DVertex<Vertex>>) {
    let left = random_tree(rng, max_depth);
    let right = random_tree(rng, max_depth);
    let words: Vec<Word> = left.words().cloned().collect();
    let r = Vertex::Node(words[rng.random_range(0..words.len())].clone());
    let mut dt = DoubleTree::glue(&left, &right);
    let root = dt.root();
    // random excursion of half the budget, then straight back to e⁺
    let mut path = vec![root.clone()];
    let wander = rng.random_range(0..=max_len / 2);
    while path.len() - 1 < wander {
        let cur = path.last().unwrap().clone();
        let nb: Vec<_> = dt.neighbors(&cur).into_iter().filter(|u| !dt.below_r(u, &r)).collect();
        if nb.is_empty() {
            break;
        }
        path.push(nb[rng.random_range(0..nb.len())].clone());
    }
    let mut cur = path.last().unwrap().clone();
    while cur != root {
        cur = dt.y_parent(&cur);
        path.push(cur.clone());
    }
    (left, right, r, path)
}

/// Runs [`verify_lemma31`] on `instances` random instances.
pub fn lemma31_sweep(instances: usize, max_depth: usize, max_len: usize, seed: Seed) -> Result<SweepReport, EnvError> {
    let residuals = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.derive("lemma31").index(i).rng();
            let lambda = rng.random_range(0.2..4.0);
            let (tree, x, path) = random_lemma31_instance(&mut rng, max_depth, max_len);
            verify_lemma31(&tree, &x, &path, lambda)
        })
        .collect::<Result<Vec<f64>, EnvError>>()?;
    Ok(SweepReport {
        instances,
        max_residual: residuals.into_iter().fold(0.0, f64::max),
    })
}

/// Runs [`verify_lemma43`] on `instances` random instances.
pub fn lemma43_sweep(instances: usize, max_depth: usize, max_len: usize, seed: Seed) -> Result<SweepReport, EnvError> {
    let residuals = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.derive("lemma43").index(i).rng();
            let lambda = rng.random_range(0.2..4.0);
            let (left, right, r, path) = random_lemma43_instance(&mut rng, max_depth, max_len);
            let mut dt = DoubleTree::glue(&left, &right);
            verify_lemma43(&mut dt, &r, &path, lambda)
        })
        .collect::<Result<Vec<f64>, EnvError>>()?;
    Ok(SweepReport {
        instances,
        max_residual: residuals.into_iter().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::word::w;
    use crate::tree::Side;

    fn v(s: &str) -> Vertex {
        s.parse().unwrap()
    }

    fn dv(side: Side, s: &str) -> DVertex<Vertex> {
        DVertex { side, node: v(s) }
    }

    #[test]
    fn chain_depth_one() {
        let t = ExplicitTree::chain(3);
        let r = verify_lemma31(&t, &w("1"), &[v("e*"), v("e"), v("1")], 1.5).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn path_with_backtrack() {
        let t = ExplicitTree::regular(2, 3);
        let path = [v("e*"), v("e"), v("2"), v("22"), v("2"), v("e"), v("1"), v("11"), v("1"), v("12")];
        let r = verify_lemma31(&t, &w("12"), &path, 0.8).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn rejects_bad_paths() {
        let t = ExplicitTree::regular(2, 2);
        let through_x = [v("e*"), v("e"), v("1"), v("e"), v("1")];
        assert!(verify_lemma31(&t, &w("1"), &through_x, 1.0).is_err());
        let through_star = [v("e*"), v("e"), v("e*"), v("e"), v("1")];
        assert!(verify_lemma31(&t, &w("1"), &through_star, 1.0).is_err());
    }

    #[test]
    fn forced_moves_between_single_vertices() {
        let a = ExplicitTree::single();
        let b = ExplicitTree::single();
        let mut dt = DoubleTree::glue(&a, &b);
        // r = e forbids e⁻, so only the trivial path is admissible
        let bad = [dv(Side::Plus, "e"), dv(Side::Minus, "e"), dv(Side::Plus, "e")];
        assert!(matches!(verify_lemma43(&mut dt, &v("e"), &bad, 2.0), Err(EnvError::InvalidPath(_))));
        let trivial = [dv(Side::Plus, "e")];
        assert_eq!(verify_lemma43(&mut dt, &v("e"), &trivial, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn crossing_path_binary_sides() {
        let a = ExplicitTree::regular(2, 3);
        let b = ExplicitTree::regular(2, 3);
        let mut dt = DoubleTree::glue(&a, &b);
        let path = [
            dv(Side::Plus, "e"),
            dv(Side::Minus, "e"),
            dv(Side::Minus, "2"),
            dv(Side::Minus, "e"),
            dv(Side::Plus, "e"),
            dv(Side::Plus, "1"),
            dv(Side::Plus, "e"),
            dv(Side::Minus, "e"),
            dv(Side::Plus, "e"),
        ];
        let r = verify_lemma43(&mut dt, &v("1"), &path, 1.7).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn right_tree_paths_coincide() {
        let a = ExplicitTree::regular(2, 2);
        let b = ExplicitTree::regular(3, 2);
        let mut dt = DoubleTree::glue(&a, &b);
        let path = [dv(Side::Plus, "e"), dv(Side::Plus, "3"), dv(Side::Plus, "31"), dv(Side::Plus, "3"), dv(Side::Plus, "e")];
        assert!(verify_lemma43(&mut dt, &v("2"), &path, 0.6).unwrap() < 1e-15);
    }

    #[test]
    fn small_sweeps() {
        let a = lemma31_sweep(200, 5, 30, Seed::new(3)).unwrap();
        assert!(a.max_residual < 1e-12, "{a:?}");
        let b = lemma43_sweep(200, 5, 30, Seed::new(4)).unwrap();
        assert!(b.max_residual < 1e-12, "{b:?}");
    }
}
