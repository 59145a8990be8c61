//! Exact enumeration of truncated Galton-Watson trees and of short walks on
//! them, and the distributional identities that can be checked that way.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EnvError;
use crate::offspring::OffspringLaw;
use crate::seed::Seed;
use crate::tree::{psi, ExplicitTree, TreeArena, Vertex, Word};

/// Default cap on the number of enumerated tree shapes.
pub const DEFAULT_SHAPE_BUDGET: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTree {
    pub tree: ExplicitTree,
    pub prob: f64,
}

/// Every depth-`d` truncation of a Galton-Watson tree with its probability.
#[derive(Clone, Debug)]
pub struct WeightedTreeEnsemble {
    pub depth: usize,
    pub trees: Vec<WeightedTree>,
}

impl WeightedTreeEnsemble {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        crate::stats::pairwise_sum(&self.trees.iter().map(|t| t.prob).collect::<Vec<_>>())
    }
}

/// Number of depth-`depth` shapes, or `None` once it exceeds `cap`.
fn shape_count(law: &OffspringLaw, depth: usize, cap: usize) -> Option<usize> {
    let mut s: usize = 1;
    for _ in 0..depth {
        let mut next: usize = 0;
        for &k in law.support() {
            let term = s.checked_pow(k)?;
            next = next.checked_add(term)?;
        }
        if next > cap {
            return None;
        }
        s = next;
    }
    Some(s)
}

/// All truncations at generation `depth` with their probabilities. Vertices at
/// generation `depth` carry no child information.
pub fn enumerate_trees(law: &OffspringLaw, depth: usize, budget: usize) -> Result<WeightedTreeEnsemble, EnvError> {
    if shape_count(law, depth, budget).is_none() {
        return Err(EnvError::Budget {
            what: "tree shapes",
            budget,
        });
    }
    // shapes as word lists relative to their own root
    let mut shapes: Vec<(Vec<Word>, f64)> = vec![(vec![Word::root()], 1.0)];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (k, p) in law.entries() {
            let k = k as usize;
            let mut idx = vec![0usize; k];
            loop {
                let mut words = vec![Word::root()];
                let mut prob = p;
                for (i, &j) in idx.iter().enumerate() {
                    let prefix = Word::root().child(i as u32 + 1);
                    words.extend(shapes[j].0.iter().map(|u| prefix.concat(u)));
                    prob *= shapes[j].1;
                }
                next.push((words, prob));
                // odometer over child shapes
                let mut pos = 0;
                while pos < k {
                    idx[pos] += 1;
                    if idx[pos] < shapes.len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == k {
                    break;
                }
            }
        }
        shapes = next;
    }
    let trees = shapes
        .into_iter()
        .map(|(words, prob)| WeightedTree {
            tree: ExplicitTree::from_words(words).expect("enumerated words form a tree"),
            prob,
        })
        .collect();
    Ok(WeightedTreeEnsemble { depth, trees })
}

/// Outcome of the exact comparison of the two sides of the fresh-point
/// reversal identity.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Prop32Report {
    pub k: usize,
    pub max_len: usize,
    pub outcome_depth: usize,
    pub trees: usize,
    pub outcomes: usize,
    /// `P(θ_k ≤ L, θ_k < τ_{e_*})`.
    pub mass: f64,
    pub residual: f64,
}

type Outcome = (ExplicitTree, Vec<Vertex>);

/// Walks from `e_*` that reach their `k`-th fresh point within `max_len`
/// steps without returning to `e_*`, with their probabilities.
fn fresh_paths(tree: &ExplicitTree, lambda: f64, k: usize, max_len: usize) -> Vec<(Vec<Vertex>, f64)> {
    fn go(
        tree: &ExplicitTree,
        lambda: f64,
        k: usize,
        max_len: usize,
        path: &mut Vec<Vertex>,
        fresh: usize,
        prob: f64,
        out: &mut Vec<(Vec<Vertex>, f64)>,
    ) {
        if path.len() > max_len {
            return;
        }
        let cur = path.last().unwrap().clone();
        let moves: Vec<(Vertex, f64)> = if cur.is_star() {
            vec![(Vertex::root(), 1.0)]
        } else {
            let nu = tree.child_count(&cur) as f64;
            let z = lambda + nu;
            tree.neighbors(&cur)
                .into_iter()
                .enumerate()
                .map(|(i, u)| (u, if i == 0 { lambda / z } else { 1.0 / z }))
                .collect()
        };
        for (next, q) in moves {
            if next.is_star() {
                continue;
            }
            let new = !path.contains(&next);
            path.push(next);
            if new && fresh + 1 == k {
                out.push((path.clone(), prob * q));
            } else {
                go(tree, lambda, k, max_len, path, fresh + usize::from(new), prob * q, out);
            }
            path.pop();
        }
    }
    let mut out = Vec::new();
    let mut path = vec![Vertex::Star];
    go(tree, lambda, k, max_len, &mut path, 0, 1.0, &mut out);
    out
}

/// Exact check that, on `{θ_k < τ_{e_*}}`, the backward tree at the `k`-th
/// fresh point together with the `Ψ`-image of the reversed trajectory has the
/// same joint law as the cut tree together with the trajectory itself.
///
/// Trees are compared through their truncation at generation `outcome_depth`.
/// The ensemble is enumerated deep enough that every quantity entering
/// either side is determined.
pub fn verify_prop32(
    law: &OffspringLaw,
    lambda: f64,
    k: usize,
    max_len: usize,
    outcome_depth: usize,
    budget: usize,
) -> Result<Prop32Report, EnvError> {
    if k == 0 || max_len == 0 {
        return Err(EnvError::Domain("k and the horizon must be at least 1".into()));
    }
    if lambda <= 0.0 {
        return Err(EnvError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let depth = (max_len - 1).max(outcome_depth).max(outcome_depth + max_len - 2);
    let ens = enumerate_trees(law, depth, budget)?;
    let mut sides: HashMap<Outcome, (f64, f64)> = HashMap::new();
    let mut mass = 0.0;
    for wt in &ens.trees {
        for (path, p) in fresh_paths(&wt.tree, lambda, k, max_len) {
            let w = wt.prob * p;
            mass += w;
            let x = path.last().unwrap().word().unwrap().clone();
            let cut = wt.tree.cut_at(&x)?.truncate(outcome_depth);
            let back = wt.tree.backward_tree(&x)?.truncate(outcome_depth);
            let image = path.iter().rev().map(|v| psi(&x, v)).collect::<Result<Vec<_>, _>>()?;
            sides.entry((back, image)).or_default().0 += w;
            sides.entry((cut, path)).or_default().1 += w;
        }
    }
    let residual = sides.values().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Prop32Report {
        k,
        max_len,
        outcome_depth,
        trees: ens.len(),
        outcomes: sides.len(),
        mass,
        residual,
    })
}

/// Chi-square comparison of sampled backward trees against the exact law of
/// the cut tree.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Lemma21Report {
    pub samples: usize,
    pub categories: usize,
    pub bins: usize,
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Smallest expected count kept as its own bin.
const MIN_EXPECTED: f64 = 5.0;

/// Samples `B_x(T_*)` truncated at `depth` and tests it against the exact
/// law of `T_*^{≤x̄}` truncated at `depth`. Trees not containing `x` (resp.
/// `x̄`) map to a single cemetery category.
pub fn lemma21_stat_check(
    law: &OffspringLaw,
    x: &Word,
    depth: usize,
    samples: usize,
    seed: Seed,
    budget: usize,
) -> Result<Lemma21Report, EnvError> {
    if samples < 2 {
        return Err(EnvError::InsufficientSamples(samples));
    }
    let xbar = x.reversed();
    let ens = enumerate_trees(law, depth.max(x.len()), budget)?;
    let mut expected: BTreeMap<Option<ExplicitTree>, f64> = BTreeMap::new();
    for wt in &ens.trees {
        let key = if wt.tree.contains_word(&xbar) {
            Some(wt.tree.cut_at(&xbar)?.truncate(depth))
        } else {
            None
        };
        *expected.entry(key).or_default() += wt.prob;
    }

    let grow = (depth + x.len()).saturating_sub(1).max(x.len());
    let observed: Vec<Option<ExplicitTree>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut arena = TreeArena::new(law.clone(), seed.derive("lemma21").index(i));
            let t = arena.to_explicit(grow, budget)?;
            if !t.contains_word(x) {
                return Ok(None);
            }
            Ok(Some(t.backward_tree(x)?.truncate(depth)))
        })
        .collect::<Result<_, EnvError>>()?;
    let mut counts: BTreeMap<Option<ExplicitTree>, usize> = BTreeMap::new();
    for o in observed {
        *counts.entry(o).or_default() += 1;
    }

    let categories = expected.len();
    if counts.keys().any(|c| !expected.contains_key(c)) {
        log::warn!("sampled a backward tree outside the support of the cut tree");
        return Ok(Lemma21Report {
            samples,
            categories,
            bins: categories,
            chi2: f64::INFINITY,
            df: categories.saturating_sub(1),
            p_value: 0.0,
        });
    }

    // (expected count, observed count), small bins pooled
    let n = samples as f64;
    let mut cells: Vec<(f64, f64)> = expected
        .iter()
        .map(|(c, p)| (p * n, counts.get(c).copied().unwrap_or(0) as f64))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pool = (0.0, 0.0);
    for (e, o) in cells {
        if e < MIN_EXPECTED || pool.0 > 0.0 && pool.0 < MIN_EXPECTED {
            pool.0 += e;
            pool.1 += o;
        } else {
            bins.push((e, o));
        }
    }
    if pool.0 > 0.0 {
        if pool.0 < MIN_EXPECTED && !bins.is_empty() {
            let b = bins.remove(0);
            pool.0 += b.0;
            pool.1 += b.1;
        }
        bins.push(pool);
    }

    if bins.len() < 2 {
        return Ok(Lemma21Report {
            samples,
            categories,
            bins: bins.len(),
            chi2: 0.0,
            df: 0,
            p_value: 1.0,
        });
    }
    let chi2: f64 = bins.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
    let df = bins.len() - 1;
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    Ok(Lemma21Report {
        samples,
        categories,
        bins: bins.len(),
        chi2,
        df,
        p_value: dist.sf(chi2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn law(s: &str) -> OffspringLaw {
        s.parse().unwrap()
    }

    #[test]
    fn ensemble_sizes() {
        let e = enumerate_trees(&law("2:1"), 2, 100).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.trees[0].prob, 1.0);
        assert_eq!(e.trees[0].tree.len(), 7);

        let e = enumerate_trees(&law("0:0.5,1:0.5"), 1, 100).unwrap();
        assert_eq!(e.len(), 2);
        assert!(e.trees.iter().all(|t| t.prob == 0.5));

        let l = law("0:0.25,2:0.75");
        for (d, n) in [(0, 1), (1, 2), (2, 5), (3, 26), (4, 677)] {
            let e = enumerate_trees(&l, d, 10_000).unwrap();
            assert_eq!(e.len(), n);
            assert_abs_diff_eq!(e.total_probability(), 1.0, epsilon = 1e-12);
        }
        assert!(matches!(enumerate_trees(&l, 5, 10_000), Err(EnvError::Budget { .. })));
    }

    #[test]
    fn shapes_are_distinct() {
        let e = enumerate_trees(&law("0:0.2,1:0.3,3:0.5"), 2, 1000).unwrap();
        let mut set = std::collections::HashSet::new();
        for t in &e.trees {
            assert!(set.insert(t.tree.clone()));
        }
        assert_abs_diff_eq!(e.total_probability(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fresh_paths_first_step() {
        let t = ExplicitTree::regular(2, 2);
        let p = fresh_paths(&t, 1.0, 1, 4);
        assert_eq!(p, vec![(vec![Vertex::Star, Vertex::root()], 1.0)]);
    }

    #[test]
    fn prop32_small_cases() {
        let r = verify_prop32(&law("2:1"), 1.3, 1, 3, 2, 10_000).unwrap();
        assert_eq!(r.residual, 0.0);
        assert_abs_diff_eq!(r.mass, 1.0, epsilon = 1e-15);
        let r = verify_prop32(&law("0:0.25,2:0.75"), 0.8, 2, 4, 2, 10_000).unwrap();
        assert!(r.residual < 1e-10, "{r:?}");
        let r = verify_prop32(&law("2:1"), 1.5, 3, 5, 2, 10_000).unwrap();
        assert!(r.residual < 1e-10, "{r:?}");
    }

    #[test]
    fn prop32_with_backtracking() {
        for (k, lambda) in [(3, 0.7), (4, 1.9)] {
            let r = verify_prop32(&law("0:0.25,2:0.75"), lambda, k, 5, 1, 10_000).unwrap();
            assert!(r.residual < 1e-10, "{r:?}");
            assert!(r.outcomes > 2 && r.mass > 0.0 && r.mass < 1.0, "{r:?}");
        }
        let r = verify_prop32(&law("0:0.3,1:0.3,3:0.4"), 1.2, 3, 4, 1, 100_000).unwrap();
        assert!(r.residual < 1e-10, "{r:?}");
    }

    #[test]
    fn lemma21_trivial_cases() {
        let r = lemma21_stat_check(&law("2:1"), &"12".parse().unwrap(), 3, 100, Seed::new(1), 100_000).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = lemma21_stat_check(&law("0:0.25,2:0.75"), &Word::root(), 3, 100, Seed::new(1), 100_000).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn lemma21_leafy_law() {
        let r = lemma21_stat_check(&law("0:0.25,2:0.75"), &"21".parse().unwrap(), 2, 20_000, Seed::new(9), 100_000).unwrap();
        assert!(r.p_value > 1e-3, "{r:?}");
        assert!(r.df >= 2);
    }
}
