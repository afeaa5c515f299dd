//! Step 1: decomposition of a binary DAG into an acyclic sequence of
//! blocks, each executable by one Exec on the PE trees.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::arch::ArchConfig;
use crate::dag::{dfs_order, ComputeDag, NodeId, OpKind};

/// Node of a subgraph unfolded into a tree. Shared nodes reached along
/// several paths appear once per path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UNode {
    pub dag: NodeId,
    /// Operator and child indices for computed nodes; `None` for leaves
    /// (values read from the register file).
    pub op: Option<(OpKind, [usize; 2])>,
    pub height: usize,
    /// Parent index and the operand position this node fills.
    pub parent: Option<(usize, usize)>,
}

impl UNode {
    pub fn is_leaf(&self) -> bool {
        self.op.is_none()
    }
}

/// A single-sink subgraph: the sink plus its ancestors that were not
/// computed by earlier blocks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Subgraph {
    pub sink: NodeId,
    /// Distinct DAG nodes, operands before consumers.
    pub nodes: Vec<NodeId>,
    /// Operator layers on the longest internal path.
    pub height: usize,
    /// Unfolded tree; index 0 is the sink.
    pub tree: Vec<UNode>,
}

impl Subgraph {
    pub fn leaf_demand(&self) -> usize {
        1 << self.height
    }

    /// Distinct leaf values.
    pub fn leaf_values(&self) -> BTreeSet<NodeId> {
        self.tree.iter().filter(|u| u.is_leaf()).map(|u| u.dag).collect()
    }

    /// Unfolded copies of `node`.
    pub fn replicas(&self, node: NodeId) -> impl Iterator<Item = usize> + '_ {
        self.tree.iter().enumerate().filter(move |(_, u)| u.dag == node && !u.is_leaf()).map(|(i, _)| i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Block {
    pub id: usize,
    pub subgraphs: Vec<Subgraph>,
    /// Distinct DAG nodes computed by the block.
    pub nodes: Vec<NodeId>,
    /// Values read from the register file, ascending.
    pub inputs: Vec<NodeId>,
    /// Values written to the register file, ascending.
    pub outputs: Vec<NodeId>,
}

impl Block {
    pub fn leaf_demand(&self) -> usize {
        self.subgraphs.iter().map(Subgraph::leaf_demand).sum()
    }

    /// Index of the subgraph computing `node`.
    pub fn subgraph_of(&self, node: NodeId) -> Option<usize> {
        self.subgraphs.iter().position(|g| g.nodes.contains(&node))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockGraph {
    pub blocks: Vec<Block>,
    /// Block dependencies `(producer, consumer)`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Block computing each node (`None` for inputs).
    pub block_of: Vec<Option<u32>>,
}

impl BlockGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("block graph serializes")
    }

    /// Builds a block graph from an explicit partition: one entry per
    /// block, listing `(sink, members)` of each subgraph. No legality
    /// checks are made; see [`validate_blocks`].
    pub fn from_partition(dag: &ComputeDag, parts: &[Vec<(NodeId, Vec<NodeId>)>]) -> BlockGraph {
        let mut block_of = vec![None; dag.len()];
        for (k, part) in parts.iter().enumerate() {
            for (_, members) in part {
                for &v in members {
                    block_of[v as usize] = Some(k as u32);
                }
            }
        }
        let consumers = dag.consumers();
        let blocks: Vec<Block> = parts
            .iter()
            .enumerate()
            .map(|(k, part)| {
                let subgraphs = part
                    .iter()
                    .map(|(sink, members)| {
                        let set: BTreeSet<NodeId> = members.iter().copied().collect();
                        let tree = unfold(dag, *sink, &set);
                        let mut nodes = members.clone();
                        nodes.sort_unstable();
                        Subgraph { sink: *sink, nodes, height: tree[0].height, tree }
                    })
                    .collect();
                finish_block(dag, &consumers, k, subgraphs, &block_of)
            })
            .collect();
        let mut edges = BTreeSet::new();
        for b in &blocks {
            for &v in &b.inputs {
                if let Some(p) = block_of[v as usize] {
                    if p as usize != b.id {
                        edges.insert((p as usize, b.id));
                    }
                }
            }
        }
        BlockGraph { blocks, edges: edges.into_iter().collect(), block_of }
    }

    /// Blocks reading each node.
    pub fn consumer_blocks(&self, n: usize) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); n];
        for b in &self.blocks {
            for &v in &b.inputs {
                out[v as usize].push(b.id as u32);
            }
        }
        out
    }
}

/// A schedulable subgraph summarized for block selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub sink: NodeId,
    pub nodes: Vec<NodeId>,
    pub height: usize,
    pub lo: u32,
    pub hi: u32,
}

impl Candidate {
    pub fn leaves(&self) -> usize {
        1 << self.height
    }
}

/// `node_count - lambda * (max dfs index - min dfs index)`.
pub fn block_fitness(node_count: usize, lo: u32, hi: u32, lambda: f64) -> f64 {
    node_count as f64 - lambda * f64::from(hi - lo)
}

/// Fitness of a set of candidates considered as one block.
pub fn candidate_set_fitness(cands: &[&Candidate], lambda: f64) -> f64 {
    let n = cands.iter().map(|c| c.nodes.len()).sum();
    let lo = cands.iter().map(|c| c.lo).min().unwrap_or(0);
    let hi = cands.iter().map(|c| c.hi).max().unwrap_or(0);
    block_fitness(n, lo, hi, lambda)
}

/// Subgraph rooted at `sink` over unmapped ancestors, if it fits a tree
/// of depth `depth`. Nodes in `mapped` act as leaves.
pub fn find_schedulable_subgraph(
    dag: &ComputeDag,
    sink: NodeId,
    mapped: &[bool],
    depth: usize,
    dfs: &[u32],
) -> Option<Candidate> {
    if mapped[sink as usize] {
        return None;
    }
    let mut nodes = Vec::new();
    let mut height: BTreeMap<NodeId, usize> = BTreeMap::new();
    // iterative post-order over unmapped ancestors
    let mut stack = vec![(sink, false, 1usize)];
    while let Some((v, expanded, level)) = stack.pop() {
        if level > depth {
            return None;
        }
        if height.contains_key(&v) {
            continue;
        }
        let ops = &dag.node(v).operands;
        if expanded {
            let h = 1 + ops
                .iter()
                .map(|&o| if mapped[o as usize] { 0 } else { height[&o] })
                .max()
                .unwrap_or(0);
            if h > depth {
                return None;
            }
            height.insert(v, h);
            nodes.push(v);
        } else {
            stack.push((v, true, level));
            for &o in ops.iter().rev() {
                if !mapped[o as usize] && !height.contains_key(&o) {
                    stack.push((o, false, level + 1));
                }
            }
        }
    }
    let lo = nodes.iter().map(|&v| dfs[v as usize]).min().unwrap();
    let hi = nodes.iter().map(|&v| dfs[v as usize]).max().unwrap();
    Some(Candidate { sink, height: height[&sink], nodes, lo, hi })
}

/// Candidates rooted at each ready node near `frontier`: the node
/// itself and its unmapped descendants up to `depth` hops away.
pub fn find_schedulable_subgraphs(
    dag: &ComputeDag,
    consumers: &[Vec<NodeId>],
    frontier: NodeId,
    mapped: &[bool],
    depth: usize,
    dfs: &[u32],
) -> Vec<Candidate> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([(frontier, 0usize)]);
    let mut out = Vec::new();
    while let Some((v, d)) = queue.pop_front() {
        if !seen.insert(v) {
            continue;
        }
        if let Some(c) = find_schedulable_subgraph(dag, v, mapped, depth, dfs) {
            out.push(c);
        }
        if d < depth {
            for &c in &consumers[v as usize] {
                if !mapped[c as usize] {
                    queue.push_back((c, d + 1));
                }
            }
        }
    }
    out
}

/// Unfolds a subgraph into a tree rooted at `sink`.
pub fn unfold(dag: &ComputeDag, sink: NodeId, members: &BTreeSet<NodeId>) -> Vec<UNode> {
    let mut tree: Vec<UNode> = Vec::new();
    fn rec(dag: &ComputeDag, v: NodeId, members: &BTreeSet<NodeId>, parent: Option<(usize, usize)>, tree: &mut Vec<UNode>) -> usize {
        let idx = tree.len();
        if !members.contains(&v) {
            tree.push(UNode { dag: v, op: None, height: 0, parent });
            return idx;
        }
        let node = dag.node(v);
        tree.push(UNode { dag: v, op: None, height: 0, parent });
        let l = rec(dag, node.operands[0], members, Some((idx, 0)), tree);
        let r = rec(dag, node.operands[1], members, Some((idx, 1)), tree);
        tree[idx].height = 1 + tree[l].height.max(tree[r].height);
        tree[idx].op = Some((node.op, [l, r]));
        idx
    }
    rec(dag, sink, members, None, &mut tree);
    tree
}

fn better(a: (f64, u32, NodeId), b: (f64, u32, NodeId)) -> bool {
    // higher fitness, then smaller sink dfs index, then smaller id
    a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
}

/// Greedy block decomposition of a binary DAG.
///
/// Every block starts from the single most fit schedulable subgraph
/// and keeps adding the subgraph that maximizes the fitness of the
/// whole block among those that are node-disjoint from it and fit the
/// remaining tree leaves. Candidates are cached by sink and refreshed
/// only around nodes mapped by the previous block.
pub fn decompose(dag: &ComputeDag, cfg: &ArchConfig, lambda: f64) -> BlockGraph {
    assert!(dag.is_binary(), "decompose expects a binarized DAG");
    let n = dag.len();
    let depth = cfg.depth;
    let dfs = dfs_order(dag);
    let consumers = dag.consumers();
    let topo = dag.topo_order().expect("valid DAG");
    let mut topo_pos = vec![0u32; n];
    for (i, &v) in topo.iter().enumerate() {
        topo_pos[v as usize] = i as u32;
    }
    let mut mapped: Vec<bool> = dag.nodes().iter().map(|nd| nd.op == OpKind::Input).collect();
    let mut cands: BTreeMap<NodeId, Candidate> = BTreeMap::new();
    for &v in &topo {
        if let Some(c) = find_schedulable_subgraph(dag, v, &mapped, depth, &dfs) {
            cands.insert(v, c);
        }
    }
    let mut remaining = mapped.iter().filter(|m| !**m).count();
    let mut blocks: Vec<Block> = Vec::new();
    let mut block_of: Vec<Option<u32>> = vec![None; n];
    let mut in_block = vec![false; n];

    while remaining > 0 {
        let mut seed: Option<(f64, u32, NodeId)> = None;
        for c in cands.values() {
            let key = (block_fitness(c.nodes.len(), c.lo, c.hi, lambda), dfs[c.sink as usize], c.sink);
            if seed.is_none_or(|s| better(key, s)) {
                seed = Some(key);
            }
        }
        let seed = seed.expect("a ready node always forms a subgraph").2;
        let mut chosen = vec![seed];
        let first = &cands[&seed];
        let (mut lo, mut hi, mut count, mut leaves) = (first.lo, first.hi, first.nodes.len(), first.leaves());
        first.nodes.iter().for_each(|&v| in_block[v as usize] = true);

        loop {
            let mut best: Option<(f64, u32, NodeId)> = None;
            for c in cands.values() {
                if leaves + c.leaves() > cfg.banks || c.nodes.iter().any(|&v| in_block[v as usize]) {
                    continue;
                }
                let key = (block_fitness(count + c.nodes.len(), lo.min(c.lo), hi.max(c.hi), lambda), dfs[c.sink as usize], c.sink);
                if best.is_none_or(|b| better(key, b)) {
                    best = Some(key);
                }
            }
            let Some((_, _, s)) = best else { break };
            let c = &cands[&s];
            lo = lo.min(c.lo);
            hi = hi.max(c.hi);
            count += c.nodes.len();
            leaves += c.leaves();
            c.nodes.iter().for_each(|&v| in_block[v as usize] = true);
            chosen.push(s);
        }

        let id = blocks.len();
        let mut subgraphs = Vec::with_capacity(chosen.len());
        let mut block_nodes = Vec::with_capacity(count);
        for s in &chosen {
            let c = cands.remove(s).unwrap();
            let members: BTreeSet<NodeId> = c.nodes.iter().copied().collect();
            let tree = unfold(dag, c.sink, &members);
            subgraphs.push(Subgraph { sink: c.sink, height: c.height, nodes: c.nodes, tree });
        }
        for g in &subgraphs {
            for &v in &g.nodes {
                mapped[v as usize] = true;
                in_block[v as usize] = false;
                block_of[v as usize] = Some(id as u32);
                block_nodes.push(v);
            }
        }
        remaining -= block_nodes.len();
        blocks.push(finish_block(dag, &consumers, id, subgraphs, &block_of));

        // refresh the cache around the newly mapped nodes
        let mut affected: BTreeSet<NodeId> = BTreeSet::new();
        let mut queue: VecDeque<(NodeId, usize)> = block_nodes.iter().map(|&v| (v, 0)).collect();
        while let Some((v, d)) = queue.pop_front() {
            if d == depth {
                continue;
            }
            for &c in &consumers[v as usize] {
                if !mapped[c as usize] && affected.insert(c) {
                    queue.push_back((c, d + 1));
                }
            }
        }
        for v in &block_nodes {
            cands.remove(v);
        }
        for &v in &affected {
            cands.remove(&v);
            if let Some(c) = find_schedulable_subgraph(dag, v, &mapped, depth, &dfs) {
                cands.insert(v, c);
            }
        }
    }

    let mut edges = BTreeSet::new();
    for b in &blocks {
        for &v in &b.inputs {
            if let Some(p) = block_of[v as usize] {
                edges.insert((p as usize, b.id));
            }
        }
    }
    BlockGraph { blocks, edges: edges.into_iter().collect(), block_of }
}

/// Fills inputs and outputs of a block from its subgraphs.
pub(crate) fn finish_block(
    dag: &ComputeDag,
    consumers: &[Vec<NodeId>],
    id: usize,
    subgraphs: Vec<Subgraph>,
    block_of: &[Option<u32>],
) -> Block {
    let mut nodes: Vec<NodeId> = subgraphs.iter().flat_map(|g| g.nodes.iter().copied()).collect();
    nodes.sort_unstable();
    let mut inputs: BTreeSet<NodeId> = BTreeSet::new();
    for g in &subgraphs {
        inputs.extend(g.leaf_values());
    }
    let mut outputs = Vec::new();
    for g in &subgraphs {
        for &v in &g.nodes {
            let external = consumers[v as usize]
                .iter()
                .any(|&c| !g.nodes.contains(&c) || block_of[c as usize].is_some_and(|b| b as usize != id));
            if external || dag.is_output(v) {
                outputs.push(v);
            }
        }
    }
    outputs.sort_unstable();
    Block { id, subgraphs, nodes, inputs: inputs.into_iter().collect(), outputs }
}

/// Result of [`validate_blocks`].
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BlockReport {
    pub violations: Vec<String>,
    /// Computed nodes over PE slots offered by all Execs.
    pub pe_utilization: f64,
    pub inter_block_edges: usize,
    pub mean_nodes_per_exec: f64,
    /// Blocks checked with the exhaustive mapper.
    pub exact_checked: usize,
}

impl BlockReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Fast mappability test: every subgraph fits the tree depth and the
/// power-of-two leaf demands fit the available leaves.
pub fn fast_mappable(heights: &[usize], cfg: &ArchConfig) -> bool {
    heights.iter().all(|&h| h >= 1 && h <= cfg.depth) && heights.iter().map(|&h| 1usize << h).sum::<usize>() <= cfg.banks
}

/// Checks coverage, subgraph structure, tree mappability and acyclicity
/// and reports the decomposition objectives.
pub fn validate_blocks(bg: &BlockGraph, dag: &ComputeDag, cfg: &ArchConfig) -> BlockReport {
    let mut rep = BlockReport::default();
    let n = dag.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let consumers = dag.consumers();
    for (k, b) in bg.blocks.iter().enumerate() {
        if b.id != k {
            rep.violations.push(format!("block {k} carries id {}", b.id));
        }
        for g in &b.subgraphs {
            for &v in &g.nodes {
                if let Some(prev) = owner[v as usize] {
                    rep.violations.push(format!("node {v} appears in blocks {prev} and {k}"));
                }
                owner[v as usize] = Some(k);
            }
        }
    }
    for v in dag.ids() {
        let is_op = dag.node(v).op != OpKind::Input;
        match (is_op, owner[v as usize]) {
            (true, None) => rep.violations.push(format!("node {v} not covered")),
            (false, Some(k)) => rep.violations.push(format!("input {v} placed in block {k}")),
            _ => {}
        }
    }
    let mut heights_ok = true;
    for (k, b) in bg.blocks.iter().enumerate() {
        let mut heights = Vec::new();
        for g in &b.subgraphs {
            heights.push(g.height);
            let members: BTreeSet<NodeId> = g.nodes.iter().copied().collect();
            let sinks: Vec<NodeId> = g
                .nodes
                .iter()
                .copied()
                .filter(|&v| !consumers[v as usize].iter().any(|c| members.contains(c)))
                .collect();
            if sinks != [g.sink] {
                rep.violations.push(format!("block {k}: subgraph {} has sinks {sinks:?}", g.sink));
            }
            for &v in &g.nodes {
                let nd = dag.node(v);
                if nd.operands.len() != 2 {
                    rep.violations.push(format!("block {k}: node {v} is not binary"));
                }
                for &o in &nd.operands {
                    if members.contains(&o) {
                        continue;
                    }
                    match owner[o as usize] {
                        Some(p) if p >= k => rep.violations.push(format!(
                            "block {k} reads node {o} produced by block {p} (dependency cycle)"
                        )),
                        _ => {}
                    }
                }
            }
            let h = subgraph_height(dag, &members, g.sink);
            if h != g.height {
                rep.violations.push(format!("block {k}: subgraph {} height {} recorded as {}", g.sink, h, g.height));
                heights_ok = false;
            }
        }
        if !fast_mappable(&heights, cfg) {
            rep.violations.push(format!("block {k}: subgraphs of heights {heights:?} do not fit the PE trees"));
        }
        if b.nodes.len() <= 1 << cfg.depth && heights_ok {
            rep.exact_checked += 1;
            let trees: Vec<Vec<UNode>> = b.subgraphs.iter().map(|g| g.tree.clone()).collect();
            if !exact_mappable(&trees, cfg) {
                rep.violations.push(format!("block {k}: exhaustive mapper finds no placement"));
            }
        }
    }
    // block graph must be acyclic
    let mut indeg = vec![0usize; bg.blocks.len()];
    let mut succ = vec![Vec::new(); bg.blocks.len()];
    for &(a, b) in &bg.edges {
        indeg[b] += 1;
        succ[a].push(b);
    }
    let mut q: VecDeque<usize> = (0..bg.blocks.len()).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(a) = q.pop_front() {
        seen += 1;
        for &b in &succ[a] {
            indeg[b] -= 1;
            if indeg[b] == 0 {
                q.push_back(b);
            }
        }
    }
    if seen != bg.blocks.len() {
        rep.violations.push("block graph has a cycle".into());
    }
    let computed: usize = bg.blocks.iter().map(|b| b.nodes.len()).sum();
    let execs = bg.blocks.len().max(1);
    rep.pe_utilization = computed as f64 / (execs * cfg.total_pes()) as f64;
    rep.mean_nodes_per_exec = computed as f64 / execs as f64;
    rep.inter_block_edges = bg.edges.len();
    rep
}

fn subgraph_height(dag: &ComputeDag, members: &BTreeSet<NodeId>, v: NodeId) -> usize {
    if !members.contains(&v) {
        return 0;
    }
    1 + dag.node(v).operands.iter().map(|&o| subgraph_height(dag, members, o)).max().unwrap_or(0)
}

/// Exhaustive search for a placement of unfolded trees on the PE trees:
/// every computed node and every pass-through occupies its own PE, a
/// node's operands arrive from the two PEs (or leaves) directly below
/// it, and operands may be forwarded upward through chains of
/// pass-through PEs.
pub fn exact_mappable(trees: &[Vec<UNode>], cfg: &ArchConfig) -> bool {
    let mut used = vec![false; cfg.total_pes()];
    let mut leaf_used = vec![false; cfg.banks];
    place_trees(trees, 0, cfg, &mut used, &mut leaf_used)
}

fn place_trees(trees: &[Vec<UNode>], k: usize, cfg: &ArchConfig, used: &mut [bool], leaf_used: &mut [bool]) -> bool {
    if k == trees.len() {
        return true;
    }
    for t in 0..cfg.trees {
        for layer in 1..=cfg.depth {
            for index in 0..1usize << (cfg.depth - layer) {
                let pe = crate::arch::PeId { tree: t, layer, index };
                let mut undo = Vec::new();
                if place_at(&trees[k], 0, pe, cfg, used, leaf_used, &mut undo)
                    && place_trees(trees, k + 1, cfg, used, leaf_used)
                {
                    return true;
                }
                rollback(&undo, used, leaf_used);
            }
        }
    }
    false
}

#[derive(Clone, Copy)]
enum Claim {
    Pe(usize),
    Leaf(usize),
}

fn rollback(undo: &[Claim], used: &mut [bool], leaf_used: &mut [bool]) {
    for c in undo {
        match *c {
            Claim::Pe(i) => used[i] = false,
            Claim::Leaf(i) => leaf_used[i] = false,
        }
    }
}

/// Makes node `u`'s value appear at the output of `pe`, either by
/// computing it there or by passing it up from a PE (or leaf) below.
fn place_at(
    tree: &[UNode],
    u: usize,
    pe: crate::arch::PeId,
    cfg: &ArchConfig,
    used: &mut [bool],
    leaf_used: &mut [bool],
    undo: &mut Vec<Claim>,
) -> bool {
    let flat = cfg.pe_flat(pe);
    if used[flat] {
        return false;
    }
    used[flat] = true;
    undo.push(Claim::Pe(flat));
    let mark = undo.len();
    let below = |side: usize| (pe.layer - 1, 2 * pe.index + side);

    if let Some((_, kids)) = tree[u].op {
        // compute here with either operand order
        for swap in [false, true] {
            let (a, b) = if swap { (kids[1], kids[0]) } else { (kids[0], kids[1]) };
            if feed(tree, a, below(0), pe.tree, cfg, used, leaf_used, undo)
                && feed(tree, b, below(1), pe.tree, cfg, used, leaf_used, undo)
            {
                return true;
            }
            rollback(&undo[mark..], used, leaf_used);
            undo.truncate(mark);
        }
    }
    // or pass it through from either side
    if pe.layer > 1 || tree[u].is_leaf() {
        for side in 0..2 {
            if feed(tree, u, below(side), pe.tree, cfg, used, leaf_used, undo) {
                return true;
            }
            rollback(&undo[mark..], used, leaf_used);
            undo.truncate(mark);
        }
    }
    rollback(&undo[mark - 1..], used, leaf_used);
    undo.truncate(mark - 1);
    false
}

/// Delivers `u` to position `(layer, index)`: a leaf slot at layer 0,
/// a PE otherwise.
#[allow(clippy::too_many_arguments)]
fn feed(
    tree: &[UNode],
    u: usize,
    (layer, index): (usize, usize),
    t: usize,
    cfg: &ArchConfig,
    used: &mut [bool],
    leaf_used: &mut [bool],
    undo: &mut Vec<Claim>,
) -> bool {
    if layer == 0 {
        if !tree[u].is_leaf() {
            return false;
        }
        let leaf = t * cfg.leaves_per_tree() + index;
        if leaf_used[leaf] {
            return false;
        }
        leaf_used[leaf] = true;
        undo.push(Claim::Leaf(leaf));
        return true;
    }
    place_at(tree, u, crate::arch::PeId { tree: t, layer, index }, cfg, used, leaf_used, undo)
}
