use std::fmt;

use super::{LazyTree, TreeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// The left tree, vertices written `u⁻`.
    Minus,
    /// The right tree, vertices written `u⁺`.
    Plus,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }
}

/// A vertex of a double tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DVertex<N> {
    pub side: Side,
    pub node: N,
}

impl<N> DVertex<N> {
    pub fn minus(node: N) -> Self {
        DVertex { side: Side::Minus, node }
    }

    pub fn plus(node: N) -> Self {
        DVertex { side: Side::Plus, node }
    }
}

impl<N: fmt::Display> fmt::Display for DVertex<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.side {
            Side::Minus => "-",
            Side::Plus => "+",
        };
        write!(f, "{}{}", self.node, tag)
    }
}

/// Two trees joined by an edge between their roots, rooted at `e⁺`. The
/// artificial parents of the two trees are not part of the graph.
#[derive(Clone, Debug)]
pub struct DoubleTree<T> {
    pub left: T,
    pub right: T,
}

/// `a` is an ancestor of `b` or equal to it.
pub fn is_ancestor_or_equal<T: LazyTree>(t: &T, a: &T::Node, b: &T::Node) -> bool {
    let da = t.depth(a);
    let mut cur = b.clone();
    let mut d = t.depth(&cur);
    while d > da {
        cur = t.parent(&cur).expect("non-star vertex has a parent");
        d -= 1;
    }
    cur == *a
}

impl<T: LazyTree> DoubleTree<T> {
    pub fn glue(left: T, right: T) -> Self {
        DoubleTree { left, right }
    }

    pub fn root(&self) -> DVertex<T::Node> {
        DVertex::plus(self.right.root())
    }

    pub fn tree(&self, side: Side) -> &T {
        match side {
            Side::Minus => &self.left,
            Side::Plus => &self.right,
        }
    }

    pub fn tree_mut(&mut self, side: Side) -> &mut T {
        match side {
            Side::Minus => &mut self.left,
            Side::Plus => &mut self.right,
        }
    }

    pub fn is_root(&self, v: &DVertex<T::Node>) -> bool {
        *v == DVertex { side: v.side, node: self.tree(v.side).root() }
    }

    /// Parent for the walk `Y`: `e⁺` and `e⁻` are each other's parent.
    pub fn y_parent(&self, v: &DVertex<T::Node>) -> DVertex<T::Node> {
        let t = self.tree(v.side);
        if v.node == t.root() {
            DVertex {
                side: v.side.other(),
                node: self.tree(v.side.other()).root(),
            }
        } else {
            DVertex {
                side: v.side,
                node: t.parent(&v.node).expect("non-root vertex has a parent"),
            }
        }
    }

    pub fn children(&mut self, v: &DVertex<T::Node>) -> Vec<DVertex<T::Node>> {
        let t = self.tree_mut(v.side);
        let k = t.child_count(&v.node);
        (0..k)
            .map(|i| DVertex { side: v.side, node: t.child(&v.node, i) })
            .collect()
    }

    /// Graph neighbors: the `Y`-parent followed by the children.
    pub fn neighbors(&mut self, v: &DVertex<T::Node>) -> Vec<DVertex<T::Node>> {
        let mut out = vec![self.y_parent(v)];
        out.extend(self.children(v));
        out
    }

    /// `u⁻` with `u ≥ r` (descendant of `r` or `r` itself).
    pub fn below_r(&self, v: &DVertex<T::Node>, r: &T::Node) -> bool {
        v.side == Side::Minus && is_ancestor_or_equal(&self.left, r, &v.node)
    }

    /// The r-parent of `v` for `r` in the left tree. Undefined on
    /// `{u⁻ : u ≥ r}`.
    pub fn r_parent(&self, v: &DVertex<T::Node>, r: &T::Node) -> Result<DVertex<T::Node>, TreeError> {
        match v.side {
            Side::Plus => Ok(self.y_parent(v)),
            Side::Minus => {
                if self.below_r(v, r) {
                    return Err(TreeError::Undefined(format!("{:?}", v)));
                }
                if is_ancestor_or_equal(&self.left, &v.node, r) {
                    // strict ancestor of r: step toward r
                    let mut cur = r.clone();
                    loop {
                        let p = self.left.parent(&cur).expect("ancestor chain reaches v");
                        if p == v.node {
                            return Ok(DVertex::minus(cur));
                        }
                        cur = p;
                    }
                }
                Ok(self.y_parent(v))
            }
        }
    }

    /// One-step law of `Y` from `v`: weight `λ` to the `Y`-parent and 1 to
    /// each child.
    pub fn y_transitions(&mut self, v: &DVertex<T::Node>, lambda: f64) -> Vec<(DVertex<T::Node>, f64)> {
        let nb = self.neighbors(v);
        let z = lambda + (nb.len() - 1) as f64;
        nb.into_iter()
            .enumerate()
            .map(|(i, u)| (u, if i == 0 { lambda / z } else { 1.0 / z }))
            .collect()
    }

    /// Allowed neighbors for `Y^{(r)}`: vertices `u⁻` with `u` a strict
    /// descendant of `r` are removed from the graph.
    pub fn yr_neighbors(&mut self, v: &DVertex<T::Node>, r: &T::Node) -> Vec<DVertex<T::Node>> {
        let nb = self.neighbors(v);
        nb.into_iter()
            .filter(|u| !(self.below_r(u, r) && u.node != *r))
            .collect()
    }

    /// One-step law of `Y^{(r)}` from `v`: weight `λ` to the r-parent and 1
    /// to every other allowed neighbor. At `r⁻` the walk is reflected and
    /// moves to its unique allowed neighbor.
    pub fn yr_transitions(
        &mut self,
        v: &DVertex<T::Node>,
        r: &T::Node,
        lambda: f64,
    ) -> Result<Vec<(DVertex<T::Node>, f64)>, TreeError> {
        let nb = self.yr_neighbors(v, r);
        if v.side == Side::Minus && v.node == *r {
            debug_assert_eq!(nb.len(), 1);
            return Ok(nb.into_iter().map(|u| (u, 1.0)).collect());
        }
        let rp = self.r_parent(v, r)?;
        let z = lambda + (nb.len() - 1) as f64;
        Ok(nb
            .into_iter()
            .map(|u| {
                let w = if u == rp { lambda } else { 1.0 };
                (u, w / z)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::explicit::ExplicitTree;
    use crate::tree::word::{w, Vertex};

    fn v(s: &str) -> Vertex {
        s.parse().unwrap()
    }

    #[test]
    fn glue_single_vertices() {
        let a = ExplicitTree::single();
        let b = ExplicitTree::single();
        let mut dt = DoubleTree::glue(&a, &b);
        let root = dt.root();
        assert_eq!(dt.neighbors(&root), vec![DVertex::minus(v("e"))]);
        assert_eq!(dt.neighbors(&DVertex::minus(v("e"))), vec![root]);
    }

    #[test]
    fn neighbors_of_root() {
        let a = ExplicitTree::single();
        let b = ExplicitTree::regular(2, 2);
        let mut dt = DoubleTree::glue(&a, &b);
        let root = dt.root();
        let nb = dt.neighbors(&root);
        assert_eq!(nb, vec![DVertex::minus(v("e")), DVertex::plus(v("1")), DVertex::plus(v("2"))]);
        let t = dt.y_transitions(&root, 1.0);
        for (_, p) in t {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn r_parent_cases() {
        let left = ExplicitTree::from_words([w("e"), w("1"), w("2"), w("11")]).unwrap();
        let right = ExplicitTree::regular(2, 1);
        let dt = DoubleTree::glue(&left, &right);
        let r = v("11");
        assert_eq!(dt.r_parent(&dt.root(), &r).unwrap(), DVertex::minus(v("e")));
        assert_eq!(dt.r_parent(&DVertex::plus(v("1")), &r).unwrap(), DVertex::plus(v("e")));
        // ancestors step toward r
        assert_eq!(dt.r_parent(&DVertex::minus(v("e")), &r).unwrap(), DVertex::minus(v("1")));
        assert_eq!(dt.r_parent(&DVertex::minus(v("1")), &r).unwrap(), DVertex::minus(v("11")));
        // off-path goes to its parent
        assert_eq!(dt.r_parent(&DVertex::minus(v("2")), &r).unwrap(), DVertex::minus(v("e")));
        assert!(matches!(dt.r_parent(&DVertex::minus(v("11")), &r), Err(TreeError::Undefined(_))));
    }

    #[test]
    fn r_parent_on_chain() {
        let left = ExplicitTree::chain(2);
        let right = ExplicitTree::single();
        let dt = DoubleTree::glue(&left, &right);
        assert_eq!(dt.r_parent(&DVertex::minus(v("e")), &v("1")).unwrap(), DVertex::minus(v("1")));
    }

    #[test]
    fn yr_reflects_at_r() {
        let left = ExplicitTree::single();
        let right = ExplicitTree::regular(2, 1);
        let mut dt = DoubleTree::glue(&left, &right);
        let t = dt.yr_transitions(&DVertex::minus(v("e")), &v("e"), 2.0).unwrap();
        assert_eq!(t, vec![(dt.root(), 1.0)]);
        let t = dt.yr_transitions(&dt.root(), &v("e"), 2.0).unwrap();
        assert_eq!(t[0], (DVertex::minus(v("e")), 0.5));
        assert_eq!(t[1].1, 0.25);
    }

    #[test]
    fn yr_hides_descendants_of_r() {
        let left = ExplicitTree::regular(2, 2);
        let right = ExplicitTree::single();
        let mut dt = DoubleTree::glue(&left, &right);
        let r = v("1");
        let nb = dt.yr_neighbors(&DVertex::minus(v("1")), &r);
        assert_eq!(nb, vec![DVertex::minus(v("e"))]);
        let t = dt.yr_transitions(&DVertex::minus(v("e")), &r, 1.5).unwrap();
        // neighbors of e⁻: e⁺ (weight 1), 1⁻ (r-parent, λ), 2⁻ (1)
        let z = 3.5;
        assert_eq!(t, vec![
            (dt.root(), 1.0 / z),
            (DVertex::minus(v("1")), 1.5 / z),
            (DVertex::minus(v("2")), 1.0 / z),
        ]);
    }
}
