use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{ComputeDag, DagError, Node, NodeId, OpKind};

/// Rewrites every k-input operator as a chain of k-1 two-input nodes.
///
/// Operands are merged Huffman style by critical-path depth: the two
/// shallowest are combined first, so the deepest operand ends up feeding
/// the root and the longest path grows as little as possible. The root
/// keeps the original node id; new nodes are appended after the
/// existing ids, in the order they are created.
pub fn binarize(dag: &ComputeDag) -> Result<ComputeDag, DagError> {
    let order = dag.topo_order()?;
    let mut nodes: Vec<Node> = dag.nodes().to_vec();
    let mut depth: Vec<u32> = vec![0; nodes.len()];

    for &id in &order {
        let node = &dag.nodes()[id as usize];
        if node.operands.len() <= 2 {
            depth[id as usize] =
                1 + node.operands.iter().map(|&o| depth[o as usize]).max().unwrap_or(0);
            continue;
        }
        // (depth, arrival sequence, node) min-heap; the sequence keeps ties
        // in operand order.
        let mut heap: BinaryHeap<Reverse<(u32, usize, NodeId)>> = node
            .operands
            .iter()
            .enumerate()
            .map(|(seq, &o)| Reverse((depth[o as usize], seq, o)))
            .collect();
        let mut seq = node.operands.len();
        while heap.len() > 2 {
            let Reverse((da, _, a)) = heap.pop().unwrap();
            let Reverse((db, _, b)) = heap.pop().unwrap();
            let new_id = nodes.len() as NodeId;
            nodes.push(Node { op: node.op, operands: vec![a, b] });
            let d = 1 + da.max(db);
            depth.push(d);
            heap.push(Reverse((d, seq, new_id)));
            seq += 1;
        }
        let Reverse((da, _, a)) = heap.pop().unwrap();
        let Reverse((db, _, b)) = heap.pop().unwrap();
        nodes[id as usize] = Node { op: node.op, operands: vec![a, b] };
        depth[id as usize] = 1 + da.max(db);
    }

    debug_assert!(nodes.iter().all(|n| n.op == OpKind::Input || n.operands.len() == 2));
    Ok(ComputeDag::from_parts(nodes, dag.outputs().to_vec(), dag.values().clone()))
}
