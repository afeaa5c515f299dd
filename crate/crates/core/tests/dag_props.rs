use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpu2::dag::{binarize, csr_footprint_bytes, dfs_order, evaluate_in, evaluate_in_order, evaluate_reference, ComputeDag, NodeId, OpKind};
use dpu2::ingest::random_dag;

/// Recursive evaluator with memoization, independent of the topological
/// sort used by the library.
fn memo_eval(dag: &ComputeDag, inputs: &BTreeMap<NodeId, f64>) -> Vec<f64> {
    fn go(dag: &ComputeDag, v: NodeId, inputs: &BTreeMap<NodeId, f64>, memo: &mut Vec<Option<f64>>) -> f64 {
        if let Some(x) = memo[v as usize] {
            return x;
        }
        let n = dag.node(v);
        let x = match n.op {
            OpKind::Input => inputs[&v],
            op => {
                let vals: Vec<f64> = n.operands.iter().map(|&o| go(dag, o, inputs, memo)).collect();
                let (first, rest) = vals.split_first().unwrap();
                rest.iter().fold(*first, |a, &b| if op == OpKind::Sum { a + b } else { a * b })
            }
        };
        memo[v as usize] = Some(x);
        x
    }
    let mut memo = vec![None; dag.len()];
    (0..dag.len() as NodeId).map(|v| go(dag, v, inputs, &mut memo)).collect()
}

/// A topological order chosen at random among all valid ones.
fn random_topo_order(dag: &ComputeDag, seed: u64) -> Vec<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let consumers = dag.consumers();
    let mut indeg: Vec<usize> = dag.nodes().iter().map(|n| n.operands.len()).collect();
    let mut ready: Vec<NodeId> = dag.ids().filter(|&v| indeg[v as usize] == 0).collect();
    let mut out = Vec::new();
    while !ready.is_empty() {
        let i = rng.gen_range(0..ready.len());
        let v = ready.swap_remove(i);
        out.push(v);
        let mut cs = consumers[v as usize].clone();
        cs.sort_unstable();
        cs.dedup();
        for &c in &cs {
            let k = dag.node(c).operands.iter().filter(|&&o| o == v).count();
            indeg[c as usize] -= k;
            if indeg[c as usize] == 0 {
                ready.push(c);
            }
        }
    }
    out
}

fn rational_inputs(dag: &ComputeDag, seed: u64) -> BTreeMap<NodeId, BigRational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dag.inputs()
        .map(|v| (v, BigRational::new(BigInt::from(rng.gen_range(-9i64..=9)), BigInt::from(rng.gen_range(1i64..=7)))))
        .collect()
}

#[test]
fn memoized_oracle_matches_on_500_nodes() {
    for seed in 0..5 {
        let dag = random_dag(500, 4, 20.0, seed);
        let inputs = dag.default_inputs().unwrap();
        assert_eq!(evaluate_reference(&dag, &inputs).unwrap(), memo_eval(&dag, &inputs));
    }
}

#[test]
fn diamond_order_keeps_siblings_adjacent() {
    let mut d = ComputeDag::new();
    let x = d.add_input(None);
    let y = d.add_input(None);
    let a = d.add_op(OpKind::Sum, vec![x, y]);
    let b = d.add_op(OpKind::Product, vec![x, y]);
    let c = d.add_op(OpKind::Sum, vec![a, b]);
    d.mark_output(c);
    let idx = dfs_order(&d);
    assert!(idx[a as usize].abs_diff(idx[b as usize]) <= 2);
    assert!(idx[c as usize] > idx[a as usize].max(idx[b as usize]));
}

#[test]
fn binarization_minimizes_longest_path_for_three_operands() {
    // one operand of depth 3, two of depth 1
    let build = |pairing: Option<[usize; 3]>| {
        let mut d = ComputeDag::new();
        let x = d.add_input(None);
        let y = d.add_input(None);
        let mut deep = d.add_op(OpKind::Sum, vec![x, y]);
        deep = d.add_op(OpKind::Sum, vec![deep, x]);
        let ops = [deep, x, y];
        let root = match pairing {
            None => d.add_op(OpKind::Sum, ops.to_vec()),
            Some([i, j, k]) => {
                let inner = d.add_op(OpKind::Sum, vec![ops[i], ops[j]]);
                d.add_op(OpKind::Sum, vec![inner, ops[k]])
            }
        };
        d.mark_output(root);
        d
    };
    let best = [[0, 1, 2], [0, 2, 1], [1, 2, 0]]
        .into_iter()
        .map(|p| build(Some(p)).validate().unwrap().longest_path)
        .min()
        .unwrap();
    let got = binarize(&build(None)).unwrap().validate().unwrap().longest_path;
    assert_eq!(got, best);
}

#[test]
fn footprint_grows_with_edges() {
    let mut d = ComputeDag::new();
    let x = d.add_input(None);
    let y = d.add_input(None);
    let a = d.add_op(OpKind::Sum, vec![x, y]);
    d.mark_output(a);
    let before = csr_footprint_bytes(&d);
    let mut e = ComputeDag::new();
    let x = e.add_input(None);
    let y = e.add_input(None);
    let a = e.add_op(OpKind::Sum, vec![x, y, x]);
    e.mark_output(a);
    assert!(csr_footprint_bytes(&e) > before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn binarize_is_exact_in_rationals(n in 20usize..400, arity in 2usize..7, par in 1.0f64..30.0, seed in any::<u64>()) {
        let dag = random_dag(n, arity, par, seed);
        let bin = binarize(&dag).unwrap();
        prop_assert!(bin.is_binary());
        let inputs = rational_inputs(&dag, seed);
        let a = evaluate_in(&dag, |v| inputs.get(&v).cloned()).unwrap();
        let b = evaluate_in(&bin, |v| inputs.get(&v).cloned()).unwrap();
        for v in dag.ids() {
            prop_assert_eq!(&a[v as usize], &b[v as usize]);
        }
        prop_assert_eq!(dag.outputs(), bin.outputs());
    }

    #[test]
    fn binarized_node_count(n in 20usize..400, arity in 2usize..7, seed in any::<u64>()) {
        let dag = random_dag(n, arity, 10.0, seed);
        let extra: usize = dag.nodes().iter().map(|nd| nd.operands.len().saturating_sub(2)).sum();
        let bin = binarize(&dag).unwrap();
        prop_assert_eq!(bin.len(), dag.len() + extra);
        prop_assert!(bin.validate().unwrap().longest_path >= dag.validate().unwrap().longest_path);
    }

    #[test]
    fn evaluation_is_order_independent(n in 10usize..300, seed in any::<u64>(), order_seed in any::<u64>()) {
        let dag = random_dag(n, 4, 8.0, seed);
        let inputs = dag.default_inputs().unwrap();
        let order = random_topo_order(&dag, order_seed);
        prop_assert_eq!(order.len(), dag.len());
        let a = evaluate_in_order(&dag, &order, |v| inputs.get(&v).copied()).unwrap();
        prop_assert_eq!(a, evaluate_reference(&dag, &inputs).unwrap());
    }

    #[test]
    fn dfs_order_is_a_topological_permutation(n in 1usize..300, seed in any::<u64>()) {
        let dag = random_dag(n, 3, 6.0, seed);
        let idx = dfs_order(&dag);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..dag.len() as u32).collect::<Vec<_>>());
        for v in dag.ids() {
            for &o in &dag.node(v).operands {
                prop_assert!(idx[o as usize] < idx[v as usize]);
            }
        }
    }

    #[test]
    fn csr_footprint_formula(n in 1usize..300, seed in any::<u64>()) {
        let dag = random_dag(n, 3, 6.0, seed);
        prop_assert_eq!(csr_footprint_bytes(&dag), (2 * dag.len() + dag.edge_count() + 1) * 4);
    }

    #[test]
    fn shuffled_operand_lists_keep_sums_within_rounding(n in 20usize..200, seed in any::<u64>()) {
        let dag = random_dag(n, 5, 8.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let nodes = dag.nodes().iter().map(|nd| {
            let mut nd = nd.clone();
            nd.operands.shuffle(&mut rng);
            nd
        }).collect();
        let shuffled = ComputeDag::from_parts(nodes, dag.outputs().to_vec(), dag.values().clone());
        let inputs = dag.default_inputs().unwrap();
        let a = evaluate_reference(&dag, &inputs).unwrap();
        let b = evaluate_reference(&shuffled, &inputs).unwrap();
        for &v in dag.outputs() {
            let (x, y) = (a[v as usize], b[v as usize]);
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
