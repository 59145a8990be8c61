use std::collections::BTreeSet;
use std::fmt;

use super::word::{Vertex, Word};
use super::{LazyTree, TreeError};

/// A finite tree stored as its set of words (Neveu convention), with the
/// artificial parent `e_*` always attached above the root.
///
/// Intended for small instances: oracles, fixtures, exact enumeration.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExplicitTree {
    words: BTreeSet<Word>,
}

impl ExplicitTree {
    /// The tree `{e}` (plus `e_*`).
    pub fn single() -> Self {
        let mut words = BTreeSet::new();
        words.insert(Word::root());
        ExplicitTree { words }
    }

    /// Builds a tree and checks the Neveu conditions: the root is present,
    /// every parent is present, and left siblings are present.
    pub fn from_words<I: IntoIterator<Item = Word>>(words: I) -> Result<Self, TreeError> {
        let words: BTreeSet<Word> = words.into_iter().collect();
        let tree = ExplicitTree { words };
        tree.check_neveu()?;
        Ok(tree)
    }

    /// Regular `b`-ary tree truncated at `depth`.
    pub fn regular(b: u32, depth: usize) -> Self {
        let mut words = BTreeSet::new();
        let mut level = vec![Word::root()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for u in &level {
                for i in 1..=b {
                    next.push(u.child(i));
                }
            }
            words.extend(level);
            level = next;
        }
        words.extend(level);
        ExplicitTree { words }
    }

    /// Unary chain `e, 1, 11, ...` with `len` words.
    pub fn chain(len: usize) -> Self {
        assert!(len >= 1);
        let words = (0..len).map(|n| Word::new(vec![1; n])).collect();
        ExplicitTree { words }
    }

    fn check_neveu(&self) -> Result<(), TreeError> {
        if !self.words.contains(&Word::root()) {
            return Err(TreeError::NotNeveu("root e missing".into()));
        }
        for u in &self.words {
            if let Some(p) = u.parent() {
                if !self.words.contains(&p) {
                    return Err(TreeError::NotNeveu(format!("parent of {u} missing")));
                }
                let last = u.last().expect("non-root");
                if last > 1 && !self.words.contains(&p.child(last - 1)) {
                    return Err(TreeError::NotNeveu(format!("left sibling of {u} missing")));
                }
            }
        }
        Ok(())
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> {
        self.words.iter()
    }

    /// `e_*` followed by the words in lexicographic order.
    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        std::iter::once(Vertex::Star).chain(self.words.iter().cloned().map(Vertex::Node))
    }

    /// Number of words (excluding `e_*`).
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains_word(&self, u: &Word) -> bool {
        self.words.contains(u)
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        match v {
            Vertex::Star => true,
            Vertex::Node(u) => self.words.contains(u),
        }
    }

    /// `ν(v)`; `ν(e_*) = 1`.
    pub fn child_count(&self, v: &Vertex) -> usize {
        match v {
            Vertex::Star => 1,
            Vertex::Node(u) => {
                if !self.words.contains(u) {
                    return 0;
                }
                let mut j = 0u32;
                while self.words.contains(&u.child(j + 1)) {
                    j += 1;
                }
                j as usize
            }
        }
    }

    pub fn children(&self, v: &Vertex) -> Vec<Vertex> {
        match v {
            Vertex::Star => vec![Vertex::root()],
            Vertex::Node(u) => (1..=self.child_count(v) as u32)
                .map(|i| Vertex::Node(u.child(i)))
                .collect(),
        }
    }

    /// Neighbors in `T_*`: parent (if any) then children.
    pub fn neighbors(&self, v: &Vertex) -> Vec<Vertex> {
        let mut out: Vec<Vertex> = v.parent().into_iter().collect();
        out.extend(self.children(v));
        out
    }

    pub fn height(&self) -> usize {
        self.words.iter().map(Word::len).max().unwrap_or(0)
    }

    /// Keeps vertices with `|u| <= depth`.
    pub fn truncate(&self, depth: usize) -> ExplicitTree {
        ExplicitTree {
            words: self.words.iter().filter(|u| u.len() <= depth).cloned().collect(),
        }
    }

    /// Words at generation `depth`.
    pub fn level(&self, depth: usize) -> Vec<Word> {
        self.words.iter().filter(|u| u.len() == depth).cloned().collect()
    }

    /// `T^{≤x}`: removes the strict descendants of `x`.
    pub fn cut_at(&self, x: &Word) -> Result<ExplicitTree, TreeError> {
        if !self.words.contains(x) {
            return Err(TreeError::NotInTree(x.to_string()));
        }
        Ok(ExplicitTree {
            words: self
                .words
                .iter()
                .filter(|u| !x.is_strict_ancestor_of(u))
                .cloned()
                .collect(),
        })
    }

    /// Backward tree at `x`: the cut tree `T^{≤x}` re-hung at `x` through
    /// `Ψ_x`. The old `e_*` becomes the leaf `x̄`, `x` becomes the new `e_*`,
    /// and every subtree hanging off the ancestral path keeps its relative
    /// labels.
    pub fn backward_tree(&self, x: &Word) -> Result<ExplicitTree, TreeError> {
        let cut = self.cut_at(x)?;
        let mut words = BTreeSet::new();
        for v in cut.vertices() {
            if let Vertex::Node(u) = psi(x, &v)? {
                words.insert(u);
            }
        }
        let tree = ExplicitTree { words };
        debug_assert!(tree.check_neveu().is_ok());
        Ok(tree)
    }

    /// One word per line in lexicographic order, the root written `e`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for u in &self.words {
            s.push_str(&u.to_string());
            s.push('\n');
        }
        s
    }

    /// Inverse of [`ExplicitTree::to_text`]. Blank lines, `#` comments and
    /// an explicit `e*` line are ignored.
    pub fn from_text(text: &str) -> Result<ExplicitTree, TreeError> {
        let mut words = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "e*" {
                continue;
            }
            words.push(line.parse::<Word>()?);
        }
        ExplicitTree::from_words(words)
    }
}

impl fmt::Debug for ExplicitTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.words.iter()).finish()
    }
}

/// The word-reversal map `Ψ_x`, defined on `U_*` minus the strict
/// descendants of `x`.
///
/// The ancestral path is reversed (`x ↦ e_*`, `e_* ↦ x̄`, ancestor
/// `x_{*k} ↦ x̄_{*(|x|-k+1)}`), and a vertex `x_{*k} v` whose first letter
/// of `v` leaves the path toward `x` is sent to `Ψ_x(x_{*k}) v`.
pub fn psi(x: &Word, v: &Vertex) -> Result<Vertex, TreeError> {
    let n = x.len();
    match v {
        Vertex::Star => Ok(Vertex::Node(x.reversed())),
        Vertex::Node(u) => {
            if x.is_strict_ancestor_of(u) {
                return Err(TreeError::OutsideDomain(format!(
                    "{u} is a strict descendant of {x}"
                )));
            }
            let xr = x.reversed();
            if u.is_prefix_of(x) {
                let k = n - u.len();
                if k == 0 {
                    Ok(Vertex::Star)
                } else {
                    Ok(Vertex::Node(xr.prefix(k - 1)))
                }
            } else {
                let a = u.common_prefix_len(x);
                let k = n - a;
                Ok(Vertex::Node(xr.prefix(k - 1).concat(&u.suffix_from(a))))
            }
        }
    }
}

impl LazyTree for &ExplicitTree {
    type Node = Vertex;

    fn star(&self) -> Vertex {
        Vertex::Star
    }

    fn root(&self) -> Vertex {
        Vertex::root()
    }

    fn parent(&self, n: &Vertex) -> Option<Vertex> {
        n.parent()
    }

    fn child_count(&mut self, n: &Vertex) -> usize {
        ExplicitTree::child_count(self, n)
    }

    fn child(&mut self, n: &Vertex, i: usize) -> Vertex {
        match n {
            Vertex::Star => Vertex::root(),
            Vertex::Node(u) => Vertex::Node(u.child(i as u32 + 1)),
        }
    }

    fn depth(&self, n: &Vertex) -> i64 {
        n.depth()
    }
}
