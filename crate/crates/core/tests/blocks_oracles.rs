use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpu2::arch::{derive_config, ArchConfig, Topology};
use dpu2::compiler::blocks::{decompose, exact_mappable, fast_mappable, unfold, validate_blocks, BlockGraph, UNode};
use dpu2::dag::{binarize, ComputeDag, NodeId, OpKind};
use dpu2::ingest::random_dag;

fn cfg(d: usize, b: usize) -> ArchConfig {
    derive_config(d, b, 32, Topology::InputXbarOutputPerLayer).unwrap()
}

fn chain(len: usize) -> ComputeDag {
    let mut d = ComputeDag::new();
    let x = d.add_input(None);
    let mut cur = d.add_input(None);
    for i in 0..len {
        let op = if i % 2 == 0 { OpKind::Sum } else { OpKind::Product };
        cur = d.add_op(op, vec![cur, x]);
    }
    d.mark_output(cur);
    d
}

#[test]
fn chain_decomposes_into_a_path() {
    let c = cfg(3, 64);
    for k in [3usize, 10, 40] {
        let dag = chain(2 * k);
        let bg = decompose(&dag, &c, 0.05);
        assert!(validate_blocks(&bg, &dag, &c).ok());
        assert!(bg.blocks.len() >= (2 * k).div_ceil(3), "{} blocks for {} nodes", bg.blocks.len(), 2 * k);
        let want: Vec<(usize, usize)> = (1..bg.blocks.len()).map(|i| (i - 1, i)).collect();
        assert_eq!(bg.edges, want);
    }
}

#[test]
fn cyclic_two_block_split_is_flagged() {
    // a feeds b, b feeds c; putting {a, c} in one block and {b} in the
    // other makes the blocks depend on each other
    let mut d = ComputeDag::new();
    let x = d.add_input(None);
    let y = d.add_input(None);
    let a = d.add_op(OpKind::Sum, vec![x, y]);
    let b = d.add_op(OpKind::Product, vec![a, y]);
    let c = d.add_op(OpKind::Sum, vec![b, x]);
    let e = d.add_op(OpKind::Sum, vec![a, c]);
    d.mark_output(e);
    let c3 = cfg(2, 16);
    let bg = BlockGraph::from_partition(&d, &[vec![(a, vec![a]), (e, vec![c, e])], vec![(b, vec![b])]]);
    let rep = validate_blocks(&bg, &d, &c3);
    assert!(rep.violations.iter().any(|v| v.contains("cycle")), "{:?}", rep.violations);
    let ok = BlockGraph::from_partition(&d, &[vec![(b, vec![a, b])], vec![(e, vec![c, e])]]);
    assert!(validate_blocks(&ok, &d, &c3).ok());
}

#[test]
fn block_deeper_than_tree_is_flagged() {
    let c = cfg(2, 16);
    let dag = chain(4);
    let all: Vec<NodeId> = (2..6).collect();
    let bg = BlockGraph::from_partition(&dag, &[vec![(5, all)]]);
    let rep = validate_blocks(&bg, &dag, &c);
    assert!(rep.violations.iter().any(|v| v.contains("do not fit")), "{:?}", rep.violations);
}

#[test]
fn hundred_random_dags_validate() {
    for seed in 0..100u64 {
        let (d, b) = [(1, 8), (2, 16), (3, 64), (3, 32)][seed as usize % 4];
        let c = cfg(d, b);
        let dag = binarize(&random_dag(100 + 20 * seed as usize, 4, 10.0, seed)).unwrap();
        let rep = validate_blocks(&decompose(&dag, &c, 0.05), &dag, &c);
        assert!(rep.ok(), "seed {seed}: {:?}", &rep.violations[..rep.violations.len().min(3)]);
    }
}

#[test]
fn five_thousand_nodes_validate() {
    let c = cfg(3, 64);
    let dag = binarize(&random_dag(5000, 3, 50.0, 7)).unwrap();
    let rep = validate_blocks(&decompose(&dag, &c, 0.05), &dag, &c);
    assert!(rep.ok());
    assert!(rep.mean_nodes_per_exec > 1.0);
    assert!(rep.exact_checked > 0);
}

/// Random binary tree with `ops` operator nodes over fresh inputs,
/// returned as an unfolded tree (root first).
fn random_tree(ops: usize, rng: &mut ChaCha8Rng) -> Vec<UNode> {
    let mut d = ComputeDag::new();
    let mut pool: Vec<NodeId> = (0..ops + 1).map(|_| d.add_input(None)).collect();
    let mut members = BTreeSet::new();
    for _ in 0..ops {
        let i = rng.gen_range(0..pool.len());
        let a = pool.swap_remove(i);
        let j = rng.gen_range(0..pool.len());
        let b = pool.swap_remove(j);
        let v = d.add_op(OpKind::Sum, vec![a, b]);
        members.insert(v);
        pool.push(v);
    }
    let root = pool[0];
    d.mark_output(root);
    unfold(&d, root, &members)
}

/// Complete binary tree of height `h` (2^h - 1 operator nodes).
fn complete_tree(h: usize) -> Vec<UNode> {
    let mut d = ComputeDag::new();
    let mut level: Vec<NodeId> = (0..1 << h).map(|_| d.add_input(None)).collect();
    let mut members = BTreeSet::new();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|p| {
                let v = d.add_op(OpKind::Product, p.to_vec());
                members.insert(v);
                v
            })
            .collect();
    }
    d.mark_output(level[0]);
    unfold(&d, level[0], &members)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Whatever the fast height/leaf test accepts, the exhaustive
    /// placement search can place.
    #[test]
    fn fast_mappability_is_sound(d in 1usize..=3, trees in 1usize..=2, seed in any::<u64>(), count in 1usize..4) {
        let c = cfg(d, (1 << d) * trees);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = 1usize << d;
        let mut forest = Vec::new();
        let mut used = 0;
        for _ in 0..count {
            if used >= budget {
                break;
            }
            let ops = rng.gen_range(1..=budget - used);
            used += ops;
            forest.push(random_tree(ops, &mut rng));
        }
        let heights: Vec<usize> = forest.iter().map(|t| t[0].height).collect();
        if fast_mappable(&heights, &c) {
            prop_assert!(exact_mappable(&forest, &c), "heights {:?}", heights);
        }
    }

    /// On complete trees, which fill their whole subtree, the two tests agree.
    #[test]
    fn fast_and_exact_agree_on_complete_trees(d in 1usize..=3, trees in 1usize..=2, hs in prop::collection::vec(1usize..=3, 1..4)) {
        let c = cfg(d, (1 << d) * trees);
        let forest: Vec<Vec<UNode>> = hs.iter().map(|&h| complete_tree(h)).collect();
        prop_assert_eq!(fast_mappable(&hs, &c), exact_mappable(&forest, &c), "heights {:?}", hs);
    }
}

#[test]
fn chains_pack_tighter_than_the_fast_bound() {
    // two height-3 chains and a single node fit two depth-3 trees, but the
    // leaf-count bound (8 + 8 + 2 > 16) rejects them
    let c = cfg(3, 16);
    let chain3 = |rng: &mut ChaCha8Rng| loop {
        let t = random_tree(3, rng);
        if t[0].height == 3 {
            break t;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let forest = vec![chain3(&mut rng), chain3(&mut rng), random_tree(1, &mut rng)];
    assert!(!fast_mappable(&[3, 3, 1], &c));
    assert!(exact_mappable(&forest, &c));
}
