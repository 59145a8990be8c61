use proptest::prelude::*;

use gwspeed::envlab::reversal::{random_lemma31_instance, random_lemma43_instance};
use gwspeed::envlab::{path_probability, verify_lemma31, verify_lemma43};
use gwspeed::tree::arena::offspring_count;
use gwspeed::tree::{DoubleTree, ExplicitTree, NodeId, TreeArena, Vertex, Word};
use gwspeed::walk::{run_walk, transition_probability, walk_arena};
use gwspeed::{OffspringLaw, Seed};

fn leafy() -> OffspringLaw {
    "0:0.25,2:0.75".parse().unwrap()
}

fn random_tree(seed: u64, depth: usize) -> ExplicitTree {
    let law: OffspringLaw = "0:0.2,1:0.3,2:0.3,3:0.2".parse().unwrap();
    TreeArena::new(law, Seed(seed)).to_explicit(depth, 100_000).unwrap()
}

/// Edge conductance: `λ^{-d}` where `d` is the depth of the lower endpoint.
fn conductance(tree: &ExplicitTree, v: &Vertex, lambda: f64) -> f64 {
    tree.neighbors(v)
        .iter()
        .map(|u| lambda.powi(-(v.depth().max(u.depth()) as i32)))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_stochastic_and_reversible(seed in any::<u64>(), lambda in 0.1f64..5.0) {
        let tree = random_tree(seed, 4);
        let mut t = &tree;
        let mut all: Vec<Vertex> = tree.vertices().collect();
        all.push(Vertex::Star);
        for v in &all {
            let total: f64 = tree.neighbors(v).iter().map(|u| transition_probability(&mut t, v, u, lambda)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12, "{v:?} sums to {total}");
            for u in tree.neighbors(v) {
                let flow = conductance(&tree, v, lambda) * transition_probability(&mut t, v, &u, lambda);
                let back = conductance(&tree, &u, lambda) * transition_probability(&mut t, &u, v, lambda);
                prop_assert!((flow - back).abs() <= 1e-12 * flow.max(back));
            }
        }
    }

    #[test]
    fn sampled_paths_have_positive_probability(seed in any::<u64>(), lambda in 0.2f64..3.0) {
        let tree = random_tree(seed, 4);
        let mut t = &tree;
        let mut rng = Seed(seed).derive("walk").rng();
        let traj = run_walk(&mut t, lambda, 40, Vertex::root(), &mut rng);
        prop_assert!(traj.counts_consistent());
        let p = path_probability(&mut t, traj.nodes(), lambda).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn arena_is_a_function_of_seed_and_word(seed in any::<u64>(), walk_seed in any::<u64>()) {
        let law = leafy();
        let mut a = TreeArena::new(law.clone(), Seed(seed));
        let mut b = TreeArena::new(law.clone(), Seed(seed));
        // grow the two arenas in different orders
        a.explore(2000, Some(5));
        let path = walk_arena(&mut b, NodeId::ROOT, 1.0, 300, &mut Seed(walk_seed).rng());
        for id in path.into_iter().filter(|&x| x != NodeId::STAR) {
            let Vertex::Node(word) = b.vertex(id) else { unreachable!() };
            let expected = offspring_count(&law, Seed(seed), &word) as usize;
            prop_assert_eq!(b.child_count(id), expected);
            if let Some(other) = a.find(&word) {
                prop_assert_eq!(a.child_count(other), expected);
            }
        }
    }

    #[test]
    fn backward_tree_preserves_shape(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let tree = random_tree(seed, 4);
        let words: Vec<Word> = tree.words().cloned().collect();
        let x = pick.get(&words).clone();
        let cut = tree.cut_at(&x).unwrap();
        let back = tree.backward_tree(&x).unwrap();
        prop_assert_eq!(back.len(), cut.len());
        let xbar = Vertex::Node(x.reversed());
        prop_assert!(back.contains(&xbar));
        prop_assert_eq!(back.child_count(&xbar), 0);
        let degrees = |t: &ExplicitTree| {
            let mut d: Vec<usize> = t.vertices().map(|v| t.child_count(&v)).collect();
            d.sort_unstable();
            d
        };
        prop_assert_eq!(degrees(&back), degrees(&cut));
        prop_assert_eq!(back.backward_tree(&x.reversed()).unwrap(), cut);
    }

    #[test]
    fn path_reversal_on_random_instances(seed in any::<u64>(), lambda in 0.2f64..4.0) {
        let mut rng = Seed(seed).rng();
        let (tree, x, path) = random_lemma31_instance(&mut rng, 4, 24);
        prop_assert!(verify_lemma31(&tree, &x, &path, lambda).unwrap() < 1e-12);
    }

    #[test]
    fn double_tree_reroot_on_random_instances(seed in any::<u64>(), lambda in 0.2f64..4.0) {
        let mut rng = Seed(seed).rng();
        let (left, right, r, path) = random_lemma43_instance(&mut rng, 4, 24);
        let mut dt = DoubleTree::glue(&left, &right);
        prop_assert!(verify_lemma43(&mut dt, &r, &path, lambda).unwrap() < 1e-12);
    }
}
