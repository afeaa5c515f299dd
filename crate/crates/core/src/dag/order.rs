use super::{ComputeDag, NodeId};

/// Depth-first post-order index of every node.
///
/// The walk starts from the outputs in ascending id order and visits
/// operands in operand order before numbering a node. Nodes not
/// reachable from any output (none, for a validated DAG) are numbered
/// afterwards in id order. Returns `index[node]`.
pub fn dfs_order(dag: &ComputeDag) -> Vec<u32> {
    const UNSEEN: u32 = u32::MAX;
    let n = dag.len();
    let mut index = vec![UNSEEN; n];
    let mut on_stack = vec![false; n];
    let mut next = 0u32;
    let mut stack: Vec<(NodeId, usize)> = Vec::new();

    let roots: Vec<NodeId> = dag.outputs().iter().copied().chain(dag.ids()).collect();
    for root in roots {
        if index[root as usize] != UNSEEN || on_stack[root as usize] {
            continue;
        }
        stack.push((root, 0));
        on_stack[root as usize] = true;
        while let Some(top) = stack.last_mut() {
            let (id, pos) = *top;
            let operands = &dag.node(id).operands;
            if pos < operands.len() {
                top.1 += 1;
                let o = operands[pos];
                if index[o as usize] == UNSEEN && !on_stack[o as usize] {
                    on_stack[o as usize] = true;
                    stack.push((o, 0));
                }
            } else {
                stack.pop();
                on_stack[id as usize] = false;
                index[id as usize] = next;
                next += 1;
            }
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::OpKind;

    #[test]
    fn chain_is_post_order() {
        let mut d = ComputeDag::new();
        let x = d.add_input(None);
        let a = d.add_op(OpKind::Sum, vec![x, x]);
        let b = d.add_op(OpKind::Sum, vec![a, a]);
        d.mark_output(b);
        let idx = dfs_order(&d);
        assert!(idx[x as usize] < idx[a as usize]);
        assert!(idx[a as usize] < idx[b as usize]);
    }

    #[test]
    fn permutation() {
        let mut d = ComputeDag::new();
        let x = d.add_input(None);
        let y = d.add_input(None);
        let a = d.add_op(OpKind::Sum, vec![x, y]);
        let b = d.add_op(OpKind::Product, vec![a, y]);
        d.mark_output(b);
        d.mark_output(a);
        let mut idx = dfs_order(&d);
        idx.sort_unstable();
        assert_eq!(idx, (0..4).collect::<Vec<_>>());
        assert_eq!(dfs_order(&d), dfs_order(&d));
    }
}
