use std::collections::BTreeMap;
use std::ops::{Add, Mul};

use super::{ComputeDag, DagError, NodeId, OpKind};

/// Numbers the evaluator can work over (f64, f32, exact rationals...).
pub trait Arith: Clone + Add<Output = Self> + Mul<Output = Self> {}

impl<T: Clone + Add<Output = T> + Mul<Output = T>> Arith for T {}

/// Double-precision evaluation of every node. The result is indexed by
/// node id.
pub fn evaluate_reference(
    dag: &ComputeDag,
    inputs: &BTreeMap<NodeId, f64>,
) -> Result<Vec<f64>, DagError> {
    evaluate_in(dag, |id| inputs.get(&id).copied())
}

/// Evaluates in topological order using `input` to value input nodes.
pub fn evaluate_in<T: Arith>(
    dag: &ComputeDag,
    input: impl Fn(NodeId) -> Option<T>,
) -> Result<Vec<T>, DagError> {
    let order = dag.topo_order()?;
    evaluate_in_order(dag, &order, input)
}

/// Evaluates following a caller-supplied topological order.
pub fn evaluate_in_order<T: Arith>(
    dag: &ComputeDag,
    order: &[NodeId],
    input: impl Fn(NodeId) -> Option<T>,
) -> Result<Vec<T>, DagError> {
    let mut vals: Vec<Option<T>> = vec![None; dag.len()];
    for &id in order {
        let node = dag.node(id);
        let v = match node.op {
            OpKind::Input => input(id).ok_or(DagError::MissingInput(id))?,
            OpKind::Sum | OpKind::Product => {
                let mut it = node.operands.iter().map(|&o| {
                    vals[o as usize].clone().expect("operand evaluated before its consumer")
                });
                let first = it.next().expect("operator has operands");
                if node.op == OpKind::Sum {
                    it.fold(first, |acc, x| acc + x)
                } else {
                    it.fold(first, |acc, x| acc * x)
                }
            }
        };
        vals[id as usize] = Some(v);
    }
    Ok(vals.into_iter().map(|v| v.expect("order covers every node")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_then_product() {
        let mut d = ComputeDag::new();
        let x1 = d.add_input(None);
        let x2 = d.add_input(None);
        let x3 = d.add_input(None);
        let a = d.add_op(OpKind::Sum, vec![x1, x2]);
        let b = d.add_op(OpKind::Product, vec![a, x3]);
        d.mark_output(b);
        let inputs = BTreeMap::from([(x1, 2.0), (x2, 3.0), (x3, 4.0)]);
        let v = evaluate_reference(&d, &inputs).unwrap();
        assert_eq!(v[b as usize], 20.0);
    }

    #[test]
    fn inputs_only_is_identity() {
        let mut d = ComputeDag::new();
        let ids: Vec<_> = (0..3).map(|_| d.add_input(None)).collect();
        for &i in &ids {
            d.mark_output(i);
        }
        let inputs: BTreeMap<_, _> = ids.iter().map(|&i| (i, i as f64 * 1.5)).collect();
        let v = evaluate_reference(&d, &inputs).unwrap();
        for &i in &ids {
            assert_eq!(v[i as usize], inputs[&i]);
        }
    }

    #[test]
    fn missing_input() {
        let mut d = ComputeDag::new();
        let x = d.add_input(None);
        d.mark_output(x);
        assert_eq!(evaluate_reference(&d, &BTreeMap::new()), Err(DagError::MissingInput(x)));
    }
}
