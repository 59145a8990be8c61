use std::collections::VecDeque;
use std::sync::Mutex;

use super::explicit::ExplicitTree;
use super::word::{Vertex, Word};
use super::{LazyTree, TreeError};
use crate::offspring::OffspringLaw;
use crate::seed::{combine, Seed};

const UNEXPANDED: u32 = u32::MAX;
const ROOT_TAG: u64 = 0x7265_6f6f_7400_0001;

/// Handle into a [`TreeArena`]. Index 0 is `e_*`, index 1 is the root `e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const STAR: NodeId = NodeId(0);
    pub const ROOT: NodeId = NodeId(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug)]
struct Record {
    parent: u32,
    letter: u32,
    depth: i32,
    key: u64,
    first_child: u32,
    n_children: u32,
}

/// Randomness key of the root of the tree grown from `seed`.
pub fn root_key(seed: Seed) -> u64 {
    combine(seed.value(), ROOT_TAG)
}

/// Key of the child with letter `i` (starting at 1) of the vertex with key
/// `key`.
#[inline]
pub fn child_key(key: u64, i: u32) -> u64 {
    combine(key, u64::from(i))
}

/// Per-node randomness key of the vertex with the given word.
pub fn node_key(seed: Seed, word: &Word) -> u64 {
    word.letters().iter().fold(root_key(seed), |k, &l| child_key(k, l))
}

/// Number of children of `word` in the tree grown from `seed`. A pure
/// function of its arguments, so any two arenas built from the same law and
/// seed agree everywhere regardless of expansion order.
pub fn offspring_count(law: &OffspringLaw, seed: Seed, word: &Word) -> u32 {
    law.sample_from_key(node_key(seed, word))
}

/// A Galton-Watson tree materialized on demand.
///
/// Children of a node are stored contiguously, so child `i` of `u` is
/// `first_child(u) + i`.
#[derive(Clone, Debug)]
pub struct TreeArena {
    law: OffspringLaw,
    seed: Seed,
    nodes: Vec<Record>,
}

impl TreeArena {
    pub fn new(law: OffspringLaw, seed: Seed) -> Self {
        let star = Record {
            parent: u32::MAX,
            letter: 0,
            depth: -1,
            key: 0,
            first_child: 1,
            n_children: 1,
        };
        let root = Record {
            parent: 0,
            letter: 0,
            depth: 0,
            key: root_key(seed),
            first_child: 0,
            n_children: UNEXPANDED,
        };
        TreeArena {
            law,
            seed,
            nodes: vec![star, root],
        }
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    /// Number of materialized vertices, `e_*` included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_expanded(&self, id: NodeId) -> bool {
        self.nodes[id.index()].n_children != UNEXPANDED
    }

    /// Samples the children of `id` if needed and returns their ids.
    pub fn expand(&mut self, id: NodeId) -> std::ops::Range<u32> {
        let rec = self.nodes[id.index()];
        if rec.n_children != UNEXPANDED {
            return rec.first_child..rec.first_child + rec.n_children;
        }
        let k = self.law.sample_from_key(rec.key);
        let first = self.nodes.len() as u32;
        for i in 1..=k {
            self.nodes.push(Record {
                parent: id.0,
                letter: i,
                depth: rec.depth + 1,
                key: child_key(rec.key, i),
                first_child: 0,
                n_children: UNEXPANDED,
            });
        }
        let r = &mut self.nodes[id.index()];
        r.first_child = first;
        r.n_children = k;
        first..first + k
    }

    #[inline]
    pub fn child_count(&mut self, id: NodeId) -> usize {
        let rec = self.nodes[id.index()];
        if rec.n_children != UNEXPANDED {
            return rec.n_children as usize;
        }
        self.expand(id).len()
    }

    /// Child with zero-based index `i`; the node must already be expanded
    /// (any call to `child_count` does that).
    #[inline]
    pub fn child_id(&self, id: NodeId, i: usize) -> NodeId {
        let rec = &self.nodes[id.index()];
        debug_assert!(rec.n_children != UNEXPANDED && i < rec.n_children as usize);
        NodeId(rec.first_child + i as u32)
    }

    /// `None` for `e_*`.
    #[inline]
    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        match id {
            NodeId::STAR => None,
            _ => Some(NodeId(self.nodes[id.index()].parent)),
        }
    }

    #[inline]
    pub fn depth(&self, id: NodeId) -> i64 {
        i64::from(self.nodes[id.index()].depth)
    }

    pub fn vertex(&self, id: NodeId) -> Vertex {
        if id == NodeId::STAR {
            return Vertex::Star;
        }
        let mut letters = Vec::with_capacity(self.nodes[id.index()].depth as usize);
        let mut cur = id;
        while cur != NodeId::ROOT {
            let rec = &self.nodes[cur.index()];
            letters.push(rec.letter);
            cur = NodeId(rec.parent);
        }
        letters.reverse();
        Vertex::Node(Word::new(letters))
    }

    /// Locates (materializing the path to) the vertex with this word.
    pub fn find(&mut self, word: &Word) -> Option<NodeId> {
        let mut cur = NodeId::ROOT;
        for &l in word.letters() {
            let k = self.child_count(cur);
            if l as usize > k {
                return None;
            }
            cur = self.child_id(cur, l as usize - 1);
        }
        Some(cur)
    }

    /// Breadth-first materialization. Returns `Some(true)` if the whole tree
    /// turned out finite within `budget` vertices, `Some(false)` if the tree
    /// reached generation `max_depth` (so it is not extinct before then), and
    /// `None` if the budget ran out first.
    pub fn explore(&mut self, budget: usize, max_depth: Option<i64>) -> Option<bool> {
        let mut queue = VecDeque::from([NodeId::ROOT]);
        let mut seen = 1usize;
        while let Some(u) = queue.pop_front() {
            if let Some(d) = max_depth {
                if self.depth(u) >= d {
                    return Some(false);
                }
            }
            let kids = self.expand(u);
            seen += kids.len();
            if seen > budget {
                return None;
            }
            queue.extend(kids.map(NodeId));
        }
        Some(true)
    }

    /// True when the tree is proven finite by exhausting it within `budget`
    /// vertices. A tree that is still growing at the budget is treated as
    /// surviving.
    pub fn is_extinct(&mut self, budget: usize) -> bool {
        let r = self.explore(budget, None) == Some(true);
        if !r {
            log::trace!("tree accepted as surviving at budget {budget}");
        }
        r
    }

    /// The truncation of the tree at generation `depth` as an explicit tree.
    pub fn to_explicit(&mut self, depth: usize, budget: usize) -> Result<ExplicitTree, TreeError> {
        let mut words = vec![Word::root()];
        let mut level = vec![(NodeId::ROOT, Word::root())];
        for _ in 0..depth {
            let mut next = Vec::new();
            for (id, w) in &level {
                let kids = self.expand(*id);
                for (i, c) in kids.enumerate() {
                    next.push((NodeId(c), w.child(i as u32 + 1)));
                }
            }
            words.extend(next.iter().map(|(_, w)| w.clone()));
            if words.len() > budget {
                return Err(TreeError::BudgetExceeded { budget });
            }
            level = next;
        }
        ExplicitTree::from_words(words)
    }
}

impl LazyTree for TreeArena {
    type Node = NodeId;

    fn star(&self) -> NodeId {
        NodeId::STAR
    }

    fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    fn parent(&self, n: &NodeId) -> Option<NodeId> {
        TreeArena::parent(self, *n)
    }

    fn child_count(&mut self, n: &NodeId) -> usize {
        TreeArena::child_count(self, *n)
    }

    fn child(&mut self, n: &NodeId, i: usize) -> NodeId {
        TreeArena::child_count(self, *n);
        TreeArena::child_id(self, *n, i)
    }

    fn depth(&self, n: &NodeId) -> i64 {
        TreeArena::depth(self, *n)
    }
}

/// A [`TreeArena`] behind a lock, for several threads growing one tree.
/// Expansion is idempotent, so interleaving never changes the tree.
#[derive(Debug)]
pub struct SharedArena {
    inner: Mutex<TreeArena>,
}

impl SharedArena {
    pub fn new(law: OffspringLaw, seed: Seed) -> Self {
        SharedArena {
            inner: Mutex::new(TreeArena::new(law, seed)),
        }
    }

    /// Expands the vertex with this word and returns its child count, or
    /// `None` if the word is not in the tree.
    pub fn expand_word(&self, word: &Word) -> Option<usize> {
        let mut a = self.inner.lock().expect("arena lock poisoned");
        let id = a.find(word)?;
        Some(a.child_count(id))
    }

    pub fn into_inner(self) -> TreeArena {
        self.inner.into_inner().expect("arena lock poisoned")
    }
}
