//! Property tests over seeded generators: structural invariants that should
//! hold for every input, not just the worked examples.

use proptest::prelude::*;
use treecomp::compressor::compress;
use treecomp::generate::{self, SplitMix64};
use treecomp::grammar::DEFAULT_NODE_BUDGET;
use treecomp::radix::radix_sort_varlen;
use treecomp::tree::{count_by_rank, enumerate_maximal_chains, parse_term, serialize_term};
use treecomp::SymbolTable;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn term_text_roundtrip(seed in any::<u64>(), size in 1usize..500, max_rank in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let mut table = SymbolTable::new();
        let tree = generate::random_tree(&mut rng, size, max_rank, &mut table);
        let text = serialize_term(&tree, &table);
        let mut table2 = SymbolTable::new();
        let back = parse_term(&text, &mut table2).unwrap();
        prop_assert_eq!(serialize_term(&back, &table2), text);
        prop_assert_eq!(back.size(), tree.size());
    }

    #[test]
    fn leaves_outnumber_branching_nodes(seed in any::<u64>(), size in 1usize..500) {
        let mut rng = SplitMix64::new(seed);
        let mut table = SymbolTable::new();
        let tree = generate::random_tree(&mut rng, size, 4, &mut table);
        let (n0, _, n_ge2) = count_by_rank(&tree);
        prop_assert!(n0 >= n_ge2 + 1);
    }

    #[test]
    fn maximal_chains_are_disjoint(seed in any::<u64>(), size in 1usize..500) {
        let mut rng = SplitMix64::new(seed);
        let mut table = SymbolTable::new();
        let tree = generate::random_tree(&mut rng, size, 2, &mut table);
        let report = enumerate_maximal_chains(&tree);
        let mut seen = std::collections::HashSet::new();
        for ch in &report.chains {
            prop_assert!(ch.length >= 2);
            let mut node = ch.top;
            for _ in 0..ch.length {
                prop_assert!(seen.insert(node));
                if node != ch.bottom {
                    node = tree.children(node)[0];
                }
            }
        }
    }

    #[test]
    fn compress_roundtrips(seed in any::<u64>(), size in 1usize..400, max_rank in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let mut table = SymbolTable::new();
        let tree = generate::random_tree(&mut rng, size, max_rank, &mut table);
        let orig = tree.clone();
        let out = compress(tree, &mut table);
        prop_assert!(out.grammar.validate(&table).is_ok());
        let back = out.grammar.eval(DEFAULT_NODE_BUDGET).unwrap();
        prop_assert!(back.structural_eq(&orig, &table));
    }

    #[test]
    fn cleanup_preserves_eval_and_meets_bound(seed in any::<u64>(), target in 8usize..80) {
        let mut rng = SplitMix64::new(seed);
        let mut table = SymbolTable::new();
        let g = generate::random_grammar(&mut rng, target, 3, 50_000, &mut table);
        prop_assume!(g.validate(&table).is_ok());
        let want = g.eval(DEFAULT_NODE_BUDGET).unwrap();
        let cleaned = g.cleanup_reasonable();
        prop_assert!(cleaned.validate(&table).is_ok());
        let got = cleaned.eval(DEFAULT_NODE_BUDGET).unwrap();
        prop_assert!(got.structural_eq(&want, &table));
        prop_assert!(cleaned.size() <= 2 * want.size() - 1);
    }

    #[test]
    fn varlen_sort_is_a_sorted_permutation(keys in prop::collection::vec(prop::collection::vec(1u32..40, 0..12), 0..60)) {
        let items: Vec<(Vec<u32>, usize)> = keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
        let mut oracle = items.clone();
        oracle.sort_by(|(a, i), (b, j)| a.cmp(b).then(i.cmp(j)));
        let sorted = radix_sort_varlen(items, 40).unwrap();
        prop_assert_eq!(sorted, oracle);
    }
}
