use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dag::{ComputeDag, NodeId, OpKind};

/// Seeded random DAG with exactly `n` nodes.
///
/// Nodes are laid out in `round(n / parallelism)` levels; level 0 holds
/// the inputs and every operator takes its first operand from the level
/// just below, so the longest path equals the level count and
/// `n / longest_path` tracks `parallelism`. Remaining operands are drawn
/// mostly from nearby positions of the last few levels, with occasional
/// long-range edges. Operators are chosen from the sampled input values
/// to keep every intermediate result within a few orders of magnitude
/// of 1, which keeps single-precision replay well conditioned. Nodes
/// nobody consumes become outputs.
pub fn random_dag(n: usize, arity_max: usize, parallelism: f64, seed: u64) -> ComputeDag {
    assert!(n >= 1, "random_dag needs at least one node");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arity_max = arity_max.max(2);
    let levels = ((n as f64 / parallelism.max(1.0)).round() as usize).clamp(1, n);

    let mut dag = ComputeDag::new();
    let mut value: Vec<f64> = Vec::with_capacity(n);
    if levels == 1 {
        for _ in 0..n {
            let v = rng.gen_range(0.25..1.0);
            let id = dag.add_input(Some(v));
            dag.mark_output(id);
        }
        return dag;
    }

    let ops = n - n_inputs(n, levels);
    let inputs = n - ops;
    let mut level_nodes: Vec<Vec<NodeId>> = Vec::with_capacity(levels);
    let mut layer = Vec::with_capacity(inputs);
    for _ in 0..inputs {
        let v = rng.gen_range(0.25..1.0);
        layer.push(dag.add_input(Some(v)));
        value.push(v);
    }
    level_nodes.push(layer);

    let per_level = ops / (levels - 1);
    let extra = ops % (levels - 1);
    for k in 1..levels {
        let count = per_level + usize::from(k - 1 < extra);
        let mut layer = Vec::with_capacity(count);
        for j in 0..count {
            let frac = (j as f64 + 0.5) / count as f64;
            let arity = rng.gen_range(2..=arity_max);
            let mut operands: Vec<NodeId> = Vec::with_capacity(arity);
            operands.push(pick_local(&level_nodes[k - 1], frac, &mut rng));
            let mut attempts = 0;
            while operands.len() < arity {
                let cand = if rng.gen_bool(0.8) {
                    let lo = k.saturating_sub(3);
                    let lvl = rng.gen_range(lo..k);
                    pick_local(&level_nodes[lvl], frac, &mut rng)
                } else {
                    let lvl = rng.gen_range(0..k);
                    let l = &level_nodes[lvl];
                    l[rng.gen_range(0..l.len())]
                };
                attempts += 1;
                if !operands.contains(&cand) || attempts > 8 {
                    operands.push(cand);
                }
            }
            let vals: Vec<f64> = operands.iter().map(|&o| value[o as usize]).collect();
            let s: f64 = vals.iter().sum();
            let p: f64 = vals.iter().product();
            let (near, far) = if s.ln().abs() <= p.ln().abs() {
                ((OpKind::Sum, s), (OpKind::Product, p))
            } else {
                ((OpKind::Product, p), (OpKind::Sum, s))
            };
            let (op, v) = if rng.gen_bool(0.25) && (1e-4..1e4).contains(&far.1) { far } else { near };
            layer.push(dag.add_op(op, operands));
            value.push(v);
        }
        level_nodes.push(layer);
    }

    let consumers = dag.consumers();
    for id in 0..n as NodeId {
        if consumers[id as usize].is_empty() {
            dag.mark_output(id);
        }
    }
    dag
}

fn n_inputs(n: usize, levels: usize) -> usize {
    let want = ((n as f64) * 0.3).round().max(1.0) as usize;
    want.min(n - (levels - 1)).max(1)
}

fn pick_local(level: &[NodeId], frac: f64, rng: &mut ChaCha8Rng) -> NodeId {
    let len = level.len();
    let center = (frac * len as f64) as isize;
    let w = (len / 16).max(2) as isize;
    let idx = (center + rng.gen_range(-w..=w)).clamp(0, len as isize - 1);
    level[idx as usize]
}
