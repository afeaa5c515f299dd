//! Step 2: placement of blocks on the PE trees and assignment of block
//! inputs and outputs to register banks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::blocks::{Block, BlockGraph, UNode};
use crate::arch::{ArchConfig, BankSet, PeId, PeOp, Topology};
use crate::dag::{ComputeDag, NodeId, OpKind};

/// Position of one subgraph on the PE trees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Placement {
    /// Global leaf index of the first leaf of the subgraph's region.
    pub start: usize,
    /// Per unfolded node: operands enter the compute PE in swapped order.
    pub swapped: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConflictKind {
    /// Two inputs of a block share a bank; repaired by a Copy before the Exec.
    Read,
    /// An output cannot be written to its bank; repaired by a Copy after the Exec.
    Write,
}

/// One operand that needs a Copy from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Conflict {
    pub block: usize,
    pub node: NodeId,
    pub kind: ConflictKind,
    pub from: u16,
    pub to: u16,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockMap {
    pub placements: Vec<Placement>,
    /// Bank each input is read from by the Exec (parallel to `Block::inputs`).
    pub read_bank: Vec<u16>,
    /// Bank each output is written to by the Exec (parallel to `Block::outputs`).
    pub write_bank: Vec<u16>,
    /// PE whose result is written for each output.
    pub write_pe: Vec<PeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mapping {
    /// Home bank of every value held in registers.
    pub bank_of: Vec<Option<u16>>,
    pub blocks: Vec<BlockMap>,
    pub conflicts: Vec<Conflict>,
}

impl Mapping {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mapping serializes")
    }

    pub fn conflicts_of(&self, block: usize) -> impl Iterator<Item = &Conflict> {
        self.conflicts.iter().filter(move |c| c.block == block)
    }
}

/// Layer at which every unfolded node is presented to its parent; the
/// root sits at the subgraph height.
fn presentation_layers(tree: &[UNode]) -> Vec<usize> {
    let mut layer = vec![0; tree.len()];
    layer[0] = tree[0].height;
    // parents precede children in the unfolded order
    for u in 1..tree.len() {
        let (p, _) = tree[u].parent.expect("non-root has a parent");
        layer[u] = tree[p].height - 1;
    }
    layer
}

/// Tree-local `(layer, index)` of the presentation PE (or leaf, at layer
/// 0) of every unfolded node.
pub fn presentation(tree: &[UNode], local_start: usize, swapped: &[bool]) -> Vec<(usize, usize)> {
    let layers = presentation_layers(tree);
    let mut pos = vec![(0, 0); tree.len()];
    pos[0] = (layers[0], local_start >> layers[0]);
    for u in 0..tree.len() {
        if let Some((_, kids)) = tree[u].op {
            let (l, i) = pos[u];
            let ci = i << (l - tree[u].height);
            for (j, &c) in kids.iter().enumerate() {
                pos[c] = (layers[c], 2 * ci + (j ^ swapped[u] as usize));
            }
        }
    }
    pos
}

/// Ancestors of `u` with the operand index through which the path from
/// the ancestor reaches `u`.
fn path_to_root(tree: &[UNode], mut u: usize) -> Vec<(usize, usize)> {
    let mut path = Vec::new();
    while let Some((p, j)) = tree[u].parent {
        path.push((p, j));
        u = p;
    }
    path
}

/// Local leaf offsets (within the subgraph region) covered by the
/// presentation PE of `u` for some completion of the unfixed swaps.
fn reachable_offsets(tree: &[UNode], layers: &[usize], u: usize, swapped: &[Option<bool>]) -> u128 {
    let h = tree[0].height;
    let path = path_to_root(tree, u);
    let mut mask = 0u128;
    'outer: for off in 0..1usize << h {
        for &(a, j) in &path {
            let ha = tree[a].height;
            let la = layers[a];
            if (off >> ha) & ((1 << (la - ha)) - 1) != 0 {
                continue 'outer;
            }
            if let Some(s) = swapped[a] {
                if (off >> (ha - 1)) & 1 != (j ^ s as usize) {
                    continue 'outer;
                }
            }
        }
        mask |= 1u128 << off;
    }
    mask
}

/// Whether subgraphs of the given heights all fit into the leaves not in
/// `used`, each in an aligned region of `2^h` leaves.
fn packs(mut used: BankSet, heights: &[usize], cfg: &ArchConfig) -> bool {
    let mut hs = heights.to_vec();
    hs.sort_unstable_by(|a, b| b.cmp(a));
    for h in hs {
        match free_regions(used, h, cfg).next() {
            Some(start) => used = used.union(BankSet::range(start, 1 << h)),
            None => return false,
        }
    }
    true
}

fn free_regions(used: BankSet, h: usize, cfg: &ArchConfig) -> impl Iterator<Item = usize> {
    let w = 1usize << h;
    (0..cfg.banks / w).map(move |g| g * w).filter(move |&s| used.intersect(BankSet::range(s, w)).is_empty())
}

/// Mutable placement state of one block while its banks are chosen.
struct PlaceState<'a> {
    block: &'a Block,
    cfg: &'a ArchConfig,
    layers: Vec<Vec<usize>>,
    start: Vec<Option<usize>>,
    swapped: Vec<Vec<Option<bool>>>,
    used: BankSet,
    /// Feasible region starts for an unplaced subgraph of each height.
    allowed: Vec<Vec<usize>>,
    /// Replicas `(subgraph, unode)` of each block output.
    replicas: BTreeMap<NodeId, Vec<(usize, usize)>>,
}

impl<'a> PlaceState<'a> {
    fn new(block: &'a Block, cfg: &'a ArchConfig) -> Self {
        let layers = block.subgraphs.iter().map(|g| presentation_layers(&g.tree)).collect();
        let mut replicas: BTreeMap<NodeId, Vec<(usize, usize)>> = BTreeMap::new();
        for &v in &block.outputs {
            let k = block.subgraph_of(v).expect("output belongs to a subgraph");
            replicas.insert(v, block.subgraphs[k].replicas(v).map(|u| (k, u)).collect());
        }
        let mut st = PlaceState {
            block,
            cfg,
            layers,
            start: vec![None; block.subgraphs.len()],
            swapped: block.subgraphs.iter().map(|g| vec![None; g.tree.len()]).collect(),
            used: BankSet::EMPTY,
            allowed: Vec::new(),
            replicas,
        };
        st.refresh_allowed();
        st
    }

    fn unplaced_heights(&self) -> Vec<usize> {
        self.block
            .subgraphs
            .iter()
            .zip(&self.start)
            .filter(|(_, s)| s.is_none())
            .map(|(g, _)| g.height)
            .collect()
    }

    fn refresh_allowed(&mut self) {
        let heights = self.unplaced_heights();
        self.allowed = vec![Vec::new(); self.cfg.depth + 1];
        for h in 1..=self.cfg.depth {
            let Some(pos) = heights.iter().position(|&x| x == h) else { continue };
            let mut rest = heights.clone();
            rest.swap_remove(pos);
            self.allowed[h] = free_regions(self.used, h, self.cfg)
                .filter(|&s| packs(self.used.union(BankSet::range(s, 1 << h)), &rest, self.cfg))
                .collect();
        }
    }

    fn starts_for(&self, k: usize) -> Vec<usize> {
        match self.start[k] {
            Some(s) => vec![s],
            None => self.allowed[self.block.subgraphs[k].height].clone(),
        }
    }

    /// Banks the output `v` can be written to without a copy, given the
    /// decisions taken so far.
    fn feasible_write(&self, v: NodeId) -> BankSet {
        if self.cfg.topology == Topology::FullXbarBoth {
            return BankSet::full(self.cfg.banks);
        }
        let mut set = BankSet::EMPTY;
        for &(k, u) in &self.replicas[&v] {
            let tree = &self.block.subgraphs[k].tree;
            let mask = reachable_offsets(tree, &self.layers[k], u, &self.swapped[k]);
            for s in self.starts_for(k) {
                set = set.union(BankSet::from_bits(mask << s));
            }
        }
        set
    }

    /// Commits the placement decisions implied by writing `v` to `bank`.
    fn fix_write(&mut self, v: NodeId, bank: usize) {
        if self.cfg.topology == Topology::FullXbarBoth {
            return;
        }
        for &(k, u) in &self.replicas[&v].clone() {
            let tree = &self.block.subgraphs[k].tree;
            let h = tree[0].height;
            let mask = reachable_offsets(tree, &self.layers[k], u, &self.swapped[k]);
            for s in self.starts_for(k) {
                if bank < s || bank >= s + (1 << h) || (mask >> (bank - s)) & 1 == 0 {
                    continue;
                }
                let off = bank - s;
                for (a, j) in path_to_root(tree, u) {
                    let bit = (off >> (tree[a].height - 1)) & 1;
                    self.swapped[k][a] = Some((bit ^ j) == 1);
                }
                if self.start[k].is_none() {
                    self.start[k] = Some(s);
                    self.used = self.used.union(BankSet::range(s, 1 << h));
                    self.refresh_allowed();
                }
                return;
            }
        }
        unreachable!("bank {bank} was not feasible for node {v}");
    }

    /// Places the remaining subgraphs largest first and fixes open swaps.
    fn finish(mut self) -> Vec<Placement> {
        let mut order: Vec<usize> = (0..self.start.len()).filter(|&k| self.start[k].is_none()).collect();
        order.sort_by_key(|&k| (std::cmp::Reverse(self.block.subgraphs[k].height), k));
        for k in order {
            let h = self.block.subgraphs[k].height;
            let s = free_regions(self.used, h, self.cfg).next().expect("block fits the PE trees");
            self.start[k] = Some(s);
            self.used = self.used.union(BankSet::range(s, 1 << h));
        }
        self.start
            .iter()
            .zip(&self.swapped)
            .map(|(s, sw)| Placement { start: s.unwrap(), swapped: sw.iter().map(|x| x.unwrap_or(false)).collect() })
            .collect()
    }
}

/// PE configuration of one block derived from its placement.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockLayout {
    /// Operation of every PE in flat order; `None` when unused.
    pub pe_op: Vec<Option<PeOp>>,
    /// DAG value produced by every PE.
    pub pe_node: Vec<Option<NodeId>>,
    /// Value each global leaf must receive.
    pub leaf_node: Vec<Option<NodeId>>,
    /// Presentation PEs of the replicas of every output.
    pub out_pes: BTreeMap<NodeId, Vec<PeId>>,
    /// PEs or leaves claimed twice.
    pub collisions: Vec<String>,
}

pub fn block_layout(block: &Block, placements: &[Placement], cfg: &ArchConfig) -> BlockLayout {
    let mut lay = BlockLayout {
        pe_op: vec![None; cfg.total_pes()],
        pe_node: vec![None; cfg.total_pes()],
        leaf_node: vec![None; cfg.banks],
        ..Default::default()
    };
    let lpt = cfg.leaves_per_tree();
    let claim = |lay: &mut BlockLayout, pe: PeId, op: PeOp, node: NodeId| {
        let f = cfg.pe_flat(pe);
        if lay.pe_op[f].is_some() {
            lay.collisions.push(format!("PE {pe:?} used twice"));
        }
        lay.pe_op[f] = Some(op);
        lay.pe_node[f] = Some(node);
    };
    for (g, pl) in block.subgraphs.iter().zip(placements) {
        let tree = &g.tree;
        let t = pl.start / lpt;
        let pos = presentation(tree, pl.start % lpt, &pl.swapped);
        for (u, un) in tree.iter().enumerate() {
            let (l, i) = pos[u];
            let bottom = un.height;
            for m in (bottom.max(1)..=l).rev() {
                if m == bottom && un.op.is_some() {
                    break;
                }
                claim(&mut lay, PeId { tree: t, layer: m, index: i << (l - m) }, PeOp::PassLeft, un.dag);
            }
            match un.op {
                Some((op, _)) => {
                    let pe = PeId { tree: t, layer: bottom, index: i << (l - bottom) };
                    let code = if op == OpKind::Product { PeOp::Mul } else { PeOp::Add };
                    claim(&mut lay, pe, code, un.dag);
                    if block.outputs.binary_search(&un.dag).is_ok() {
                        lay.out_pes.entry(un.dag).or_default().push(PeId { tree: t, layer: l, index: i });
                    }
                }
                None => {
                    let leaf = t * lpt + (i << l);
                    if lay.leaf_node[leaf].is_some() {
                        lay.collisions.push(format!("leaf {leaf} used twice"));
                    }
                    lay.leaf_node[leaf] = Some(un.dag);
                }
            }
        }
    }
    lay
}

/// Banks `v` can be written to given a finished layout.
fn writable(lay: &BlockLayout, v: NodeId, cfg: &ArchConfig) -> BankSet {
    lay.out_pes[&v].iter().fold(BankSet::EMPTY, |s, &pe| s.union(cfg.writable_banks(pe)))
}

/// Kuhn matching of outputs to distinct writable banks, each output
/// trying its home bank first.
fn match_writes(outputs: &[NodeId], home: &[usize], adj: &[BankSet], banks: usize) -> Vec<usize> {
    let n = outputs.len();
    let mut owner: Vec<Option<usize>> = vec![None; banks];
    let homes = home.iter().fold(BankSet::EMPTY, |mut s, &h| {
        s.insert(h);
        s
    });
    let order_of = |i: usize| -> Vec<usize> {
        let mut v = Vec::with_capacity(adj[i].len());
        if adj[i].contains(home[i]) {
            v.push(home[i]);
        }
        v.extend(adj[i].minus(homes).iter());
        v.extend(adj[i].intersect(homes).iter().filter(|&b| b != home[i]));
        v
    };
    let orders: Vec<Vec<usize>> = (0..n).map(order_of).collect();
    fn augment(i: usize, orders: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &b in &orders[i] {
            if seen[b] {
                continue;
            }
            seen[b] = true;
            if owner[b].is_none_or(|j| augment(j, orders, owner, seen)) {
                owner[b] = Some(i);
                return true;
            }
        }
        false
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| (!adj[i].contains(home[i]), i));
    for i in idx {
        let mut seen = vec![false; banks];
        let ok = augment(i, &orders, &mut owner, &mut seen);
        assert!(ok, "outputs always admit a perfect matching onto writable banks");
    }
    let mut phys = vec![0; n];
    for (b, o) in owner.iter().enumerate() {
        if let Some(i) = o {
            phys[*i] = b;
        }
    }
    phys
}

/// Chooses physical read and write banks for a placed block and records
/// the copies that repair conflicts.
fn repair(
    block: &Block,
    placements: Vec<Placement>,
    bank_of: &[Option<u16>],
    load: &[usize],
    cfg: &ArchConfig,
    conflicts: &mut Vec<Conflict>,
) -> BlockMap {
    let lay = block_layout(block, &placements, cfg);
    let home_in: Vec<usize> = block.inputs.iter().map(|&v| bank_of[v as usize].expect("input has a bank") as usize).collect();
    let homes = home_in.iter().fold(BankSet::EMPTY, |mut s, &h| {
        s.insert(h);
        s
    });
    let mut taken = homes;
    let mut seen = BankSet::EMPTY;
    let mut read_bank = Vec::with_capacity(block.inputs.len());
    for (i, &v) in block.inputs.iter().enumerate() {
        let h = home_in[i];
        if !seen.contains(h) {
            seen.insert(h);
            read_bank.push(h as u16);
            continue;
        }
        let t = BankSet::full(cfg.banks)
            .minus(taken)
            .iter()
            .min_by_key(|&b| (load[b], b))
            .expect("enough banks for all inputs");
        taken.insert(t);
        read_bank.push(t as u16);
        conflicts.push(Conflict { block: block.id, node: v, kind: ConflictKind::Read, from: h as u16, to: t as u16 });
    }

    let home_out: Vec<usize> = block.outputs.iter().map(|&v| bank_of[v as usize].expect("output has a bank") as usize).collect();
    let adj: Vec<BankSet> = block.outputs.iter().map(|&v| writable(&lay, v, cfg)).collect();
    let phys = match_writes(&block.outputs, &home_out, &adj, cfg.banks);
    let mut write_pe = Vec::with_capacity(phys.len());
    for (i, &v) in block.outputs.iter().enumerate() {
        let pe = *lay.out_pes[&v]
            .iter()
            .find(|&&pe| cfg.writable_banks(pe).contains(phys[i]))
            .expect("matched bank is writable");
        write_pe.push(pe);
        if phys[i] != home_out[i] {
            conflicts.push(Conflict {
                block: block.id,
                node: v,
                kind: ConflictKind::Write,
                from: phys[i] as u16,
                to: home_out[i] as u16,
            });
        }
    }
    BlockMap { placements, read_bank, write_bank: phys.iter().map(|&b| b as u16).collect(), write_pe }
}

fn pick(set: BankSet, rng: &mut ChaCha8Rng) -> usize {
    set.nth(rng.gen_range(0..set.len())).unwrap()
}

/// Conflict-aware mapping.
///
/// Blocks are handled in order. Within a block, the unassigned inputs
/// and the outputs are assigned one at a time, always the one with the
/// fewest compatible banks; the bank is drawn uniformly from the
/// compatible set. A chosen bank is removed from the compatible sets of
/// values read together with the node by any later block.
pub fn map(bg: &BlockGraph, dag: &ComputeDag, cfg: &ArchConfig, seed: u64) -> Mapping {
    let n = dag.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let consumers = bg.consumer_blocks(n);
    let full = BankSet::full(cfg.banks);
    let mut compat = vec![full; n];
    let mut bank_of: Vec<Option<u16>> = vec![None; n];
    let mut load = vec![0usize; cfg.banks];
    let mut blocks = Vec::with_capacity(bg.blocks.len());
    let mut conflicts = Vec::new();

    for block in &bg.blocks {
        let mut st = PlaceState::new(block, cfg);
        let mut reads = BankSet::EMPTY;
        let mut pending: Vec<(NodeId, bool)> = Vec::new();
        for &v in &block.inputs {
            match bank_of[v as usize] {
                Some(b) => reads.insert(b as usize),
                None => pending.push((v, false)),
            }
        }
        pending.extend(block.outputs.iter().map(|&v| (v, true)));
        let mut writes = BankSet::EMPTY;

        while !pending.is_empty() {
            let sets: Vec<BankSet> = pending
                .iter()
                .map(|&(v, out)| {
                    if out {
                        compat[v as usize].intersect(st.feasible_write(v)).minus(writes)
                    } else {
                        compat[v as usize].minus(reads)
                    }
                })
                .collect();
            let i = (0..pending.len()).min_by_key(|&i| (sets[i].len(), pending[i].0)).unwrap();
            let (v, out) = pending.swap_remove(i);
            let set = sets[i];
            let bank = if !set.is_empty() {
                pick(set, &mut rng)
            } else if out {
                let f = st.feasible_write(v).minus(writes);
                if f.is_empty() {
                    pick(full.minus(writes), &mut rng)
                } else {
                    pick(f, &mut rng)
                }
            } else {
                let best = full.iter().map(|b| 2 * reads.contains(b) as usize + !compat[v as usize].contains(b) as usize).min().unwrap();
                let ties: BankSet = full
                    .iter()
                    .filter(|&b| 2 * reads.contains(b) as usize + !compat[v as usize].contains(b) as usize == best)
                    .collect();
                pick(ties, &mut rng)
            };
            if out {
                writes.insert(bank);
                if st.feasible_write(v).contains(bank) {
                    st.fix_write(v, bank);
                }
            } else {
                reads.insert(bank);
            }
            bank_of[v as usize] = Some(bank as u16);
            load[bank] += 1;
            for &c in &consumers[v as usize] {
                for &u in &bg.blocks[c as usize].inputs {
                    if u != v && bank_of[u as usize].is_none() {
                        compat[u as usize].remove(bank);
                    }
                }
            }
        }
        let placements = st.finish();
        blocks.push(repair(block, placements, &bank_of, &load, cfg, &mut conflicts));
    }
    Mapping { bank_of, blocks, conflicts }
}

/// Baseline mapping with uniformly random banks.
pub fn random_map(bg: &BlockGraph, dag: &ComputeDag, cfg: &ArchConfig, seed: u64) -> Mapping {
    let n = dag.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank_of: Vec<Option<u16>> = vec![None; n];
    let mut load = vec![0usize; cfg.banks];
    let mut blocks = Vec::with_capacity(bg.blocks.len());
    let mut conflicts = Vec::new();
    for block in &bg.blocks {
        for &v in block.inputs.iter().chain(&block.outputs) {
            if bank_of[v as usize].is_none() {
                let b = rng.gen_range(0..cfg.banks);
                bank_of[v as usize] = Some(b as u16);
                load[b] += 1;
            }
        }
        let placements = PlaceState::new(block, cfg).finish();
        blocks.push(repair(block, placements, &bank_of, &load, cfg, &mut conflicts));
    }
    Mapping { bank_of, blocks, conflicts }
}

/// Copies needed to repair a mapping: for every block, the inputs that
/// share a bank with another input, plus the outputs written somewhere
/// other than their bank.
pub fn count_conflicts(m: &Mapping, bg: &BlockGraph) -> usize {
    let mut total = 0;
    for (block, bm) in bg.blocks.iter().zip(&m.blocks) {
        let homes: BankSet = block.inputs.iter().map(|&v| m.bank_of[v as usize].unwrap() as usize).collect();
        total += block.inputs.len() - homes.len();
        total += block
            .outputs
            .iter()
            .zip(&bm.write_bank)
            .filter(|(&v, &p)| m.bank_of[v as usize] != Some(p))
            .count();
    }
    total
}

/// Checks the placement and bank constraints of a mapping. Returns the
/// violations found.
pub fn check_constraints(bg: &BlockGraph, dag: &ComputeDag, m: &Mapping, cfg: &ArchConfig) -> Vec<String> {
    let mut errs = Vec::new();
    for (block, bm) in bg.blocks.iter().zip(&m.blocks) {
        let k = block.id;
        let lay = block_layout(block, &bm.placements, cfg);
        errs.extend(lay.collisions.iter().map(|c| format!("block {k}: {c}")));
        // every compute PE must combine exactly its DAG operands
        let mut carried = vec![None; cfg.total_pes()];
        for f in 0..cfg.total_pes() {
            let pe = cfg.pe_from_flat(f);
            let input = |side: usize| -> Option<NodeId> {
                if pe.layer == 1 {
                    lay.leaf_node[pe.tree * cfg.leaves_per_tree() + 2 * pe.index + side]
                } else {
                    carried[cfg.pe_flat(PeId { tree: pe.tree, layer: pe.layer - 1, index: 2 * pe.index + side })]
                }
            };
            let (l, r) = (input(0), input(1));
            carried[f] = match lay.pe_op[f] {
                None => None,
                Some(PeOp::PassLeft) => l,
                Some(PeOp::PassRight) => r,
                Some(op) => {
                    let v = lay.pe_node[f].unwrap();
                    let nd = dag.node(v);
                    let want_op = if nd.op == OpKind::Product { PeOp::Mul } else { PeOp::Add };
                    let mut got = [l, r];
                    let mut want = [Some(nd.operands[0]), Some(nd.operands[1])];
                    got.sort();
                    want.sort();
                    if op != want_op || got != want {
                        errs.push(format!("block {k}: PE {pe:?} computes {v} from {l:?},{r:?}"));
                    }
                    Some(v)
                }
            };
            if lay.pe_op[f].is_some() && carried[f] != lay.pe_node[f] {
                errs.push(format!("block {k}: PE {pe:?} carries {:?}, expected {:?}", carried[f], lay.pe_node[f]));
            }
        }
        // reads: one per bank, every leaf fed from the bank holding its value
        let mut read = BankSet::EMPTY;
        for (i, &v) in block.inputs.iter().enumerate() {
            let b = bm.read_bank[i] as usize;
            if read.contains(b) {
                errs.push(format!("block {k}: two inputs read from bank {b}"));
            }
            read.insert(b);
            let home = m.bank_of[v as usize].map(|h| h as usize);
            let copied = m.conflicts_of(k).any(|c| c.kind == ConflictKind::Read && c.node == v && c.to as usize == b);
            if home != Some(b) && !copied {
                errs.push(format!("block {k}: input {v} read from bank {b} without a copy"));
            }
        }
        for (leaf, v) in lay.leaf_node.iter().enumerate() {
            if let Some(v) = v {
                if block.inputs.binary_search(v).is_err() {
                    errs.push(format!("block {k}: leaf {leaf} expects non-input {v}"));
                }
            }
        }
        // writes: one per bank, each from a PE that carries the value and can reach the bank
        let mut written = BankSet::EMPTY;
        for (i, &v) in block.outputs.iter().enumerate() {
            let b = bm.write_bank[i] as usize;
            if written.contains(b) {
                errs.push(format!("block {k}: two outputs written to bank {b}"));
            }
            written.insert(b);
            let pe = bm.write_pe[i];
            if !cfg.writable_banks(pe).contains(b) {
                errs.push(format!("block {k}: PE {pe:?} cannot write bank {b}"));
            }
            if carried[cfg.pe_flat(pe)] != Some(v) {
                errs.push(format!("block {k}: PE {pe:?} does not carry output {v}"));
            }
            let home = m.bank_of[v as usize].map(|h| h as usize);
            let copied = m.conflicts_of(k).any(|c| c.kind == ConflictKind::Write && c.node == v && c.from as usize == b);
            if home != Some(b) && !copied {
                errs.push(format!("block {k}: output {v} written to bank {b} away from its home without a copy"));
            }
        }
    }
    errs
}

/// Register occupancy per bank over block steps, ignoring spills.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupancyProfile {
    /// `series[bank][step]`.
    pub series: Vec<Vec<u32>>,
    /// Largest per-bank mean occupancy over the mean of all banks.
    pub balance: f64,
    pub peak: u32,
}

impl OccupancyProfile {
    pub fn from_series(series: Vec<Vec<u32>>) -> Self {
        let means: Vec<f64> = series
            .iter()
            .map(|s| if s.is_empty() { 0.0 } else { s.iter().map(|&x| f64::from(x)).sum::<f64>() / s.len() as f64 })
            .collect();
        let mean = means.iter().sum::<f64>() / means.len().max(1) as f64;
        let max = means.iter().copied().fold(0.0, f64::max);
        let balance = if mean > 0.0 { max / mean } else { 1.0 };
        let peak = series.iter().flat_map(|s| s.iter().copied()).max().unwrap_or(0);
        OccupancyProfile { series, balance, peak }
    }
}

/// Live values per home bank after every block step: a value is live
/// from the step that produces it (or first reads it, for DAG inputs)
/// through the last step that reads it.
pub fn bank_occupancy_profile(m: &Mapping, bg: &BlockGraph, cfg: &ArchConfig) -> OccupancyProfile {
    let steps = bg.blocks.len();
    let n = m.bank_of.len();
    let mut first = vec![usize::MAX; n];
    let mut last = vec![0usize; n];
    for b in &bg.blocks {
        for &v in b.inputs.iter().chain(&b.outputs) {
            first[v as usize] = first[v as usize].min(b.id);
            last[v as usize] = last[v as usize].max(b.id);
        }
    }
    let mut delta = vec![vec![0i64; steps + 1]; cfg.banks];
    for v in 0..n {
        if let Some(bank) = m.bank_of[v] {
            if first[v] != usize::MAX {
                delta[bank as usize][first[v]] += 1;
                delta[bank as usize][last[v] + 1] -= 1;
            }
        }
    }
    let series = delta
        .iter()
        .map(|d| {
            let mut acc = 0i64;
            d[..steps].iter().map(|&x| {
                acc += x;
                acc as u32
            }).collect()
        })
        .collect();
    OccupancyProfile::from_series(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::derive_config;
    use crate::compiler::blocks::{decompose, validate_blocks};
    use crate::ingest::random_dag;

    #[test]
    fn single_pe_block() {
        let mut d = ComputeDag::new();
        let x = d.add_input(Some(2.0));
        let y = d.add_input(Some(3.0));
        let a = d.add_op(OpKind::Sum, vec![x, y]);
        d.mark_output(a);
        let cfg = derive_config(1, 2, 4, Topology::InputXbarOutputPerLayer).unwrap();
        let bg = decompose(&d, &cfg, 0.05);
        let m = map(&bg, &d, &cfg, 1);
        assert_ne!(m.bank_of[0], m.bank_of[1]);
        assert!(m.conflicts.is_empty());
        assert!(check_constraints(&bg, &d, &m, &cfg).is_empty());
    }

    #[test]
    fn random_dags_satisfy_constraints() {
        for (seed, (dd, b)) in [(1, 8), (2, 16), (3, 64), (3, 32)].into_iter().enumerate() {
            for topo in [Topology::InputXbarOutputPerLayer, Topology::FullXbarBoth] {
                let cfg = derive_config(dd, b, 32, topo).unwrap();
                let dag = crate::dag::binarize(&random_dag(600, 3, 20.0, seed as u64)).unwrap();
                let bg = decompose(&dag, &cfg, 0.05);
                assert!(validate_blocks(&bg, &dag, &cfg).ok());
                for m in [map(&bg, &dag, &cfg, 7), random_map(&bg, &dag, &cfg, 7)] {
                    let errs = check_constraints(&bg, &dag, &m, &cfg);
                    assert!(errs.is_empty(), "{:?}", &errs[..errs.len().min(5)]);
                    assert_eq!(count_conflicts(&m, &bg), m.conflicts.len());
                }
            }
        }
    }

    #[test]
    fn compiler_mapping_beats_random() {
        let cfg = derive_config(3, 64, 32, Topology::InputXbarOutputPerLayer).unwrap();
        let dag = crate::dag::binarize(&random_dag(3000, 3, 50.0, 5)).unwrap();
        let bg = decompose(&dag, &cfg, 0.05);
        let c = map(&bg, &dag, &cfg, 1).conflicts.len();
        let r = random_map(&bg, &dag, &cfg, 1).conflicts.len();
        assert!(c * 10 <= r, "compiler {c} random {r}");
    }

    #[test]
    fn packing_is_exact_for_aligned_regions() {
        let cfg = derive_config(2, 8, 16, Topology::InputXbarOutputPerLayer).unwrap();
        assert!(packs(BankSet::EMPTY, &[2, 2], &cfg));
        assert!(!packs(BankSet::single(0).union(BankSet::single(4)), &[2], &cfg));
        assert!(!packs(BankSet::single(0), &[2, 1, 1], &cfg));
        assert!(packs(BankSet::single(0), &[2, 1], &cfg));
    }
}
