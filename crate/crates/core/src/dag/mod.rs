//! Compute DAGs: the workload model shared by every compiler stage.
//!
//! A [`ComputeDag`] holds nodes that are either inputs or arithmetic
//! operators (sum, product) over earlier nodes. Node ids are dense
//! integers; id `i` is the `i`-th entry of the node list. All
//! determinism guarantees in the compiler are stated relative to this
//! numbering.

mod binarize;
mod eval;
mod order;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binarize::binarize;
pub use eval::{evaluate_in, evaluate_in_order, evaluate_reference, Arith};
pub use order::dfs_order;

pub type NodeId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Input,
    Sum,
    Product,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Input => "input",
            OpKind::Sum => "sum",
            OpKind::Product => "product",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub op: OpKind,
    pub operands: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("DAG has no nodes")]
    Empty,
    #[error("node {node} references missing node {operand}")]
    DanglingRef { node: NodeId, operand: NodeId },
    #[error("output {0} does not exist")]
    BadOutput(NodeId),
    #[error("cycle detected through edge {from} -> {to}")]
    CycleDetected { from: NodeId, to: NodeId },
    #[error("node {node} ({op}) has {arity} operands")]
    BadArity { node: NodeId, op: &'static str, arity: usize },
    #[error("node {0} is not an output and has no consumers")]
    DeadNode(NodeId),
    #[error("missing value for input node {0}")]
    MissingInput(NodeId),
}

/// Summary statistics of a validated DAG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagStats {
    pub node_count: usize,
    pub input_count: usize,
    pub edge_count: usize,
    /// Longest path counted in nodes (a lone input has length 1).
    pub longest_path: usize,
    pub parallelism_ratio: f64,
    pub max_outdegree: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComputeDag {
    nodes: Vec<Node>,
    outputs: Vec<NodeId>,
    values: BTreeMap<NodeId, f64>,
}

impl ComputeDag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a DAG from raw parts without checking anything; call
    /// [`ComputeDag::validate`] before handing it to the compiler.
    pub fn from_parts(nodes: Vec<Node>, outputs: Vec<NodeId>, values: BTreeMap<NodeId, f64>) -> Self {
        let mut outputs = outputs;
        outputs.sort_unstable();
        outputs.dedup();
        ComputeDag { nodes, outputs, values }
    }

    pub fn add_input(&mut self, value: Option<f64>) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node { op: OpKind::Input, operands: Vec::new() });
        if let Some(v) = value {
            self.values.insert(id, v);
        }
        id
    }

    pub fn add_op(&mut self, op: OpKind, operands: Vec<NodeId>) -> NodeId {
        debug_assert!(op != OpKind::Input);
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node { op, operands });
        id
    }

    pub fn mark_output(&mut self, id: NodeId) {
        if let Err(pos) = self.outputs.binary_search(&id) {
            self.outputs.insert(pos, id);
        }
    }

    pub fn set_value(&mut self, id: NodeId, value: f64) {
        self.values.insert(id, value);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        0..self.nodes.len() as NodeId
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn is_output(&self, id: NodeId) -> bool {
        self.outputs.binary_search(&id).is_ok()
    }

    /// Default values attached to input nodes (constants and sample data).
    pub fn values(&self) -> &BTreeMap<NodeId, f64> {
        &self.values
    }

    pub fn inputs(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids().filter(|&id| self.node(id).op == OpKind::Input)
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.operands.len()).sum()
    }

    /// Consumers of every node, each list in ascending id order. A node
    /// that uses the same operand twice appears twice.
    pub fn consumers(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            for &o in &n.operands {
                out[o as usize].push(id as NodeId);
            }
        }
        out
    }

    /// Input values taken from the stored defaults, failing on the first
    /// input without one.
    pub fn default_inputs(&self) -> Result<BTreeMap<NodeId, f64>, DagError> {
        let mut m = BTreeMap::new();
        for id in self.inputs() {
            let v = self.values.get(&id).ok_or(DagError::MissingInput(id))?;
            m.insert(id, *v);
        }
        Ok(m)
    }

    /// Kahn topological order; fails with a named back edge on cycles.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, DagError> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for (id, node) in self.nodes.iter().enumerate() {
            for &o in &node.operands {
                if o as usize >= n {
                    return Err(DagError::DanglingRef { node: id as NodeId, operand: o });
                }
            }
            indeg[id] = node.operands.len();
        }
        let consumers = self.consumers();
        let mut queue: VecDeque<NodeId> =
            (0..n as NodeId).filter(|&i| indeg[i as usize] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &c in &consumers[u as usize] {
                indeg[c as usize] -= 1;
                if indeg[c as usize] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        Err(self.find_back_edge(&indeg))
    }

    fn find_back_edge(&self, indeg: &[usize]) -> DagError {
        // Walk operand edges backwards from any stuck node; since every
        // stuck node has a stuck operand, the walk must revisit a node.
        let start = indeg.iter().position(|&d| d > 0).expect("stuck node");
        let mut seen_at = vec![usize::MAX; self.nodes.len()];
        let mut path = Vec::new();
        let mut cur = start as NodeId;
        loop {
            if seen_at[cur as usize] != usize::MAX {
                // path[k] consumes path[k + 1], so `cur` feeds the last
                // node on the path and that edge closes the cycle.
                let prev = *path.last().unwrap();
                return DagError::CycleDetected { from: cur, to: prev };
            }
            seen_at[cur as usize] = path.len();
            path.push(cur);
            let next = self.nodes[cur as usize]
                .operands
                .iter()
                .copied()
                .find(|&o| indeg[o as usize] > 0)
                .expect("stuck node has a stuck operand");
            cur = next;
        }
    }

    /// Longest path (in nodes) ending at each node.
    pub fn depths(&self, order: &[NodeId]) -> Vec<u32> {
        let mut depth = vec![0u32; self.nodes.len()];
        for &id in order {
            let node = &self.nodes[id as usize];
            depth[id as usize] =
                1 + node.operands.iter().map(|&o| depth[o as usize]).max().unwrap_or(0);
        }
        depth
    }

    /// Checks structural invariants and returns the DAG statistics.
    pub fn validate(&self) -> Result<DagStats, DagError> {
        if self.nodes.is_empty() {
            return Err(DagError::Empty);
        }
        for &o in &self.outputs {
            if o as usize >= self.nodes.len() {
                return Err(DagError::BadOutput(o));
            }
        }
        let order = self.topo_order()?;
        for (id, node) in self.nodes.iter().enumerate() {
            let arity = node.operands.len();
            let ok = match node.op {
                OpKind::Input => arity == 0,
                OpKind::Sum | OpKind::Product => arity >= 2,
            };
            if !ok {
                return Err(DagError::BadArity { node: id as NodeId, op: node.op.name(), arity });
            }
        }
        let consumers = self.consumers();
        for (id, cs) in consumers.iter().enumerate() {
            if cs.is_empty() && !self.is_output(id as NodeId) {
                return Err(DagError::DeadNode(id as NodeId));
            }
        }
        Ok(self.stats_with(&order, &consumers))
    }

    fn stats_with(&self, order: &[NodeId], consumers: &[Vec<NodeId>]) -> DagStats {
        let depth = self.depths(order);
        let longest_path = depth.iter().copied().max().unwrap_or(0) as usize;
        let node_count = self.nodes.len();
        DagStats {
            node_count,
            input_count: self.inputs().count(),
            edge_count: self.edge_count(),
            longest_path,
            parallelism_ratio: node_count as f64 / longest_path.max(1) as f64,
            max_outdegree: consumers.iter().map(Vec::len).max().unwrap_or(0),
        }
    }

    /// True when every operator node has exactly two operands.
    pub fn is_binary(&self) -> bool {
        self.nodes.iter().all(|n| n.op == OpKind::Input || n.operands.len() == 2)
    }
}

/// Bytes of a compressed-sparse-row encoding of the DAG: `n + 1` row
/// pointers, one column index per edge and one operator/value word per
/// node, all 4 bytes wide.
pub fn csr_footprint_bytes(dag: &ComputeDag) -> usize {
    let n = dag.len();
    4 * (n + 1) + 4 * dag.edge_count() + 4 * n
}
