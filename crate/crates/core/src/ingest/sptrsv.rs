use super::{IngestError, SparseMatrix};
use crate::dag::{ComputeDag, NodeId, OpKind};

/// A lower-triangular solve `L x = b` unrolled into a DAG, with the ids of
/// the right-hand-side inputs and the solution nodes.
#[derive(Clone, Debug)]
pub struct SptrsvSystem {
    pub dag: ComputeDag,
    pub rhs: Vec<NodeId>,
    pub solution: Vec<NodeId>,
}

/// Unrolls forward substitution with `b = 1`.
pub fn sptrsv_dag(m: &SparseMatrix) -> Result<ComputeDag, IngestError> {
    Ok(sptrsv_system(m, &vec![1.0; m.dim])?.dag)
}

/// Unrolls `x_i = (1/L_ii) * (b_i + sum_j (-L_ij) * x_j)` using only sums
/// and products; `-L_ij` and `1/L_ii` become constant inputs. Each row's
/// sum lists `b_i` first and then the products in column order.
pub fn sptrsv_system(m: &SparseMatrix, rhs: &[f64]) -> Result<SptrsvSystem, IngestError> {
    assert_eq!(rhs.len(), m.dim, "rhs length must match the matrix dimension");
    if let Some(row) = m.diagonal.iter().position(|&d| d == 0.0) {
        return Err(IngestError::ZeroDiagonal(row));
    }
    let rows = m.off_diagonal_rows();
    let mut dag = ComputeDag::new();
    let mut rhs_ids = Vec::with_capacity(m.dim);
    let mut x: Vec<NodeId> = Vec::with_capacity(m.dim);
    for (i, row) in rows.iter().enumerate() {
        let b = dag.add_input(Some(rhs[i]));
        rhs_ids.push(b);
        let inv = dag.add_input(Some(1.0 / m.diagonal[i]));
        let acc = if row.is_empty() {
            b
        } else {
            let mut terms = vec![b];
            for &(j, v) in row {
                let c = dag.add_input(Some(-v));
                terms.push(dag.add_op(OpKind::Product, vec![c, x[j]]));
            }
            dag.add_op(OpKind::Sum, terms)
        };
        let xi = dag.add_op(OpKind::Product, vec![inv, acc]);
        dag.mark_output(xi);
        x.push(xi);
    }
    Ok(SptrsvSystem { dag, rhs: rhs_ids, solution: x })
}
