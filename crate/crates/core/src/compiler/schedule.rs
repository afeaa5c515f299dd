//! Steps 3 and 4: linearization into an abstract instruction list,
//! hazard-free reordering, register spilling and write-address
//! prediction.
//!
//! The abstract list works on value instances: every register write
//! creates a fresh instance `(node, bank)`, and every read names the
//! instance it consumes. Slot addresses are only assigned at the end,
//! by replaying the hardware allocation policy.

use std::collections::{BTreeMap, VecDeque};

use super::blocks::BlockGraph;
use super::mapping::{ConflictKind, Mapping};
use super::CompileError;
use crate::arch::{ArchConfig, ReadEvent, WriteEvent};
use crate::dag::{ComputeDag, NodeId, OpKind};

/// Data-memory row in one of the three regions; resolved to an address
/// once all region sizes are known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Row {
    Input(u32),
    Output(u32),
    Spill(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AKind {
    Exec(usize),
    Copy,
    Load(Row),
    Store(Row),
    Nop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ARead {
    pub bank: u16,
    pub inst: u32,
    /// Last read of the instance: the slot is released.
    pub rst: bool,
}

/// Abstract instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AOp {
    pub kind: AKind,
    pub reads: Vec<ARead>,
    /// `(bank, instance)`, at most one per bank.
    pub writes: Vec<(u16, u32)>,
}

impl AOp {
    fn nop() -> Self {
        AOp { kind: AKind::Nop, reads: Vec::new(), writes: Vec::new() }
    }
}

/// Memory cell `(row, column)` holding a DAG value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub node: NodeId,
    pub row: Row,
    pub col: u16,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Linear {
    pub ops: Vec<AOp>,
    /// `(node, bank)` of every instance.
    pub insts: Vec<(NodeId, u16)>,
    pub inputs: Vec<Cell>,
    pub outputs: Vec<Cell>,
    pub input_rows: u32,
    pub output_rows: u32,
    pub spill_rows: u32,
}

impl Linear {
    fn new_inst(&mut self, node: NodeId, bank: u16) -> u32 {
        self.insts.push((node, bank));
        (self.insts.len() - 1) as u32
    }
}

/// Blocks flushed with a pending output store are stored at the latest
/// this many blocks later.
const STORE_BATCH_AGE: usize = 8;
/// Blocks a memory row stays open for further inputs.
const LOAD_LOOKAHEAD: usize = 8;

/// Furthest a Load may move ahead of its list position during reorder.
const LOAD_HOIST: usize = 16;

/// Packs every DAG input into a memory row at its home column. A row
/// opened for block `k` also takes inputs first used up to
/// `LOAD_LOOKAHEAD` blocks later. Returns `(block, cells)` per row in
/// opening order.
fn plan_input_rows(bg: &BlockGraph, m: &Mapping, dag: &ComputeDag) -> Vec<(usize, Vec<(u16, NodeId)>)> {
    let mut seen = vec![false; dag.len()];
    // (opening block, occupied columns, cells)
    type OpenRow = (usize, u128, Vec<(u16, NodeId)>);
    let mut rows: Vec<OpenRow> = Vec::new();
    let mut first_live = 0;
    for block in &bg.blocks {
        let k = block.id;
        while first_live < rows.len() && rows[first_live].0 + LOAD_LOOKAHEAD <= k {
            first_live += 1;
        }
        for &v in &block.inputs {
            if dag.node(v).op != OpKind::Input || seen[v as usize] {
                continue;
            }
            seen[v as usize] = true;
            let bank = m.bank_of[v as usize].unwrap();
            let bit = 1u128 << bank;
            match rows[first_live..].iter_mut().find(|r| r.1 & bit == 0) {
                Some(r) => {
                    r.1 |= bit;
                    r.2.push((bank, v));
                }
                None => rows.push((k, bit, vec![(bank, v)])),
            }
        }
    }
    rows.into_iter().map(|(k, _, cells)| (k, cells)).collect()
}

/// Builds the instruction list in block order: Loads of first-used DAG
/// inputs, read-conflict Copies, the Exec, write-conflict Copies and
/// batched Stores of DAG outputs.
pub fn linearize(bg: &BlockGraph, m: &Mapping, dag: &ComputeDag, banks: usize) -> Linear {
    let n = dag.len();
    let mut lin = Linear::default();
    let mut cur: Vec<Option<u32>> = vec![None; n];
    let rows_at = plan_input_rows(bg, m, dag);
    let mut rows_at = rows_at.into_iter().peekable();
    // pending output stores: column -> node, plus the block that opened the batch
    let mut batch: BTreeMap<u16, NodeId> = BTreeMap::new();
    let mut batch_opened = 0usize;

    let flush = |lin: &mut Linear, batch: &mut BTreeMap<u16, NodeId>, cur: &[Option<u32>]| {
        if batch.is_empty() {
            return;
        }
        let row = Row::Output(lin.output_rows);
        lin.output_rows += 1;
        let reads = batch
            .iter()
            .map(|(&col, &v)| {
                lin.outputs.push(Cell { node: v, row, col });
                ARead { bank: col, inst: cur[v as usize].unwrap(), rst: false }
            })
            .collect();
        lin.ops.push(AOp { kind: AKind::Store(row), reads, writes: Vec::new() });
        batch.clear();
    };

    for (block, bm) in bg.blocks.iter().zip(&m.blocks) {
        let k = block.id;
        while let Some((_, mut cols)) = rows_at.next_if(|(at, _)| *at == k) {
            let row = Row::Input(lin.input_rows);
            lin.input_rows += 1;
            cols.sort_unstable();
            let mut writes = Vec::with_capacity(cols.len());
            for (bank, v) in cols {
                let x = lin.new_inst(v, bank);
                cur[v as usize] = Some(x);
                lin.inputs.push(Cell { node: v, row, col: bank });
                writes.push((bank, x));
            }
            lin.ops.push(AOp { kind: AKind::Load(row), reads: Vec::new(), writes });
        }

        // read conflicts
        let mut temp: BTreeMap<NodeId, (u16, u32)> = BTreeMap::new();
        for c in m.conflicts_of(k).filter(|c| c.kind == ConflictKind::Read) {
            let src = cur[c.node as usize].unwrap();
            let x = lin.new_inst(c.node, c.to);
            temp.insert(c.node, (c.to, x));
            lin.ops.push(AOp {
                kind: AKind::Copy,
                reads: vec![ARead { bank: c.from, inst: src, rst: false }],
                writes: vec![(c.to, x)],
            });
        }

        let mut reads: Vec<ARead> = block
            .inputs
            .iter()
            .zip(&bm.read_bank)
            .map(|(&v, &b)| {
                let inst = match temp.get(&v) {
                    Some(&(tb, x)) if tb == b => x,
                    _ => cur[v as usize].unwrap(),
                };
                ARead { bank: b, inst, rst: false }
            })
            .collect();
        reads.sort_unstable_by_key(|r| r.bank);
        let mut writes = Vec::with_capacity(block.outputs.len());
        let mut post = Vec::new();
        for (&v, &p) in block.outputs.iter().zip(&bm.write_bank) {
            let x = lin.new_inst(v, p);
            writes.push((p, x));
            let home = m.bank_of[v as usize].unwrap();
            if p == home {
                cur[v as usize] = Some(x);
            } else {
                post.push((v, p, x, home));
            }
        }
        writes.sort_unstable();
        lin.ops.push(AOp { kind: AKind::Exec(k), reads, writes });
        for (v, p, x, home) in post {
            let y = lin.new_inst(v, home);
            cur[v as usize] = Some(y);
            lin.ops.push(AOp {
                kind: AKind::Copy,
                reads: vec![ARead { bank: p, inst: x, rst: false }],
                writes: vec![(home, y)],
            });
        }

        // batched stores of DAG outputs
        if !batch.is_empty() && k >= batch_opened + STORE_BATCH_AGE {
            flush(&mut lin, &mut batch, &cur);
        }
        for &v in &block.outputs {
            if !dag.is_output(v) {
                continue;
            }
            let home = m.bank_of[v as usize].unwrap();
            if batch.contains_key(&home) {
                flush(&mut lin, &mut batch, &cur);
            }
            if batch.is_empty() {
                batch_opened = k;
            }
            batch.insert(home, v);
        }
    }
    flush(&mut lin, &mut batch, &cur);

    place_unread_inputs(&mut lin, dag, banks);
    lin
}

/// Gives DAG inputs that no block reads a cell of their own.
fn place_unread_inputs(lin: &mut Linear, dag: &ComputeDag, banks: usize) {
    let placed: std::collections::BTreeSet<NodeId> = lin.inputs.iter().map(|c| c.node).collect();
    let mut col = banks;
    for v in dag.inputs() {
        if placed.contains(&v) {
            continue;
        }
        if col == banks {
            lin.input_rows += 1;
            col = 0;
        }
        lin.inputs.push(Cell { node: v, row: Row::Input(lin.input_rows - 1), col: col as u16 });
        col += 1;
    }
}

/// Positions of the instruction writing each instance in `ops`.
fn writer_positions(ops: &[AOp], insts: usize) -> Vec<Option<usize>> {
    let mut w = vec![None; insts];
    for (p, op) in ops.iter().enumerate() {
        for &(_, x) in &op.writes {
            w[x as usize] = Some(p);
        }
    }
    w
}

/// Stable greedy list scheduling. At every position the first pending
/// instruction (within the head plus `window` followers) whose operands
/// were written at least `pipe_stages` positions earlier is emitted;
/// when none qualifies a Nop is emitted.
pub fn reorder(ops: &[AOp], insts: usize, cfg: &ArchConfig, window: usize) -> Vec<AOp> {
    let l = cfg.pipe_stages;
    let mut written_at: Vec<Option<usize>> = vec![None; insts];
    let mut pending: VecDeque<usize> = (0..ops.len()).collect();
    let mut out: Vec<AOp> = Vec::with_capacity(ops.len() + ops.len() / 4);
    while !pending.is_empty() {
        let p = out.len();
        let ready = |i: usize| {
            ops[i].reads.iter().all(|r| written_at[r.inst as usize].is_some_and(|w| p - w >= l))
        };
        let pick = pending
            .iter()
            .take(window + 1)
            .enumerate()
            .position(|(j, &i)| ready(i) && (j <= LOAD_HOIST || !matches!(ops[i].kind, AKind::Load(_))));
        match pick {
            Some(j) => {
                let i = pending.remove(j).unwrap();
                for &(_, x) in &ops[i].writes {
                    written_at[x as usize] = Some(p);
                }
                out.push(ops[i].clone());
            }
            None => out.push(AOp::nop()),
        }
    }
    out
}

/// Outcome of the spill pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpillStats {
    pub spills: usize,
    pub restores: usize,
    pub nops: usize,
}

/// Inserts spill Stores and restore Loads so that no bank ever holds
/// more than `regs_per_bank` reserved instances. An instance is reserved
/// from the issue of its writer until the issue of its last reader.
pub fn insert_spills(lin: &mut Linear, ops: Vec<AOp>, cfg: &ArchConfig) -> Result<(Vec<AOp>, SpillStats), CompileError> {
    let l = cfg.pipe_stages;
    let cap = cfg.regs_per_bank;
    let mut future: Vec<VecDeque<usize>> = vec![VecDeque::new(); lin.insts.len()];
    for (q, op) in ops.iter().enumerate() {
        for r in &op.reads {
            future[r.inst as usize].push_back(q);
        }
    }
    let mut alias: Vec<u32> = (0..lin.insts.len() as u32).collect();
    let mut written_at: Vec<usize> = vec![usize::MAX; lin.insts.len()];
    let mut live: Vec<Vec<u32>> = vec![Vec::new(); cfg.banks];
    let mut restores: BTreeMap<usize, Vec<(u32, Row, u16)>> = BTreeMap::new();
    let mut free_rows: Vec<Vec<u32>> = vec![Vec::new(); cfg.banks];
    let mut next_row: Vec<u32> = vec![0; cfg.banks];
    let mut out: Vec<AOp> = Vec::with_capacity(ops.len());
    let mut stats = SpillStats::default();

    fn resolve(alias: &[u32], mut x: u32) -> u32 {
        while alias[x as usize] != x {
            x = alias[x as usize];
        }
        x
    }

    struct St<'a> {
        lin: &'a mut Linear,
        future: &'a mut Vec<VecDeque<usize>>,
        alias: &'a mut Vec<u32>,
        written_at: &'a mut Vec<usize>,
        live: &'a mut Vec<Vec<u32>>,
        restores: &'a mut BTreeMap<usize, Vec<(u32, Row, u16)>>,
        free_rows: &'a mut Vec<Vec<u32>>,
        next_row: &'a mut Vec<u32>,
        out: &'a mut Vec<AOp>,
        stats: &'a mut SpillStats,
    }

    impl St<'_> {
        /// Emits `op` (reads already resolved) at the end of the stream,
        /// padding and spilling as needed. `q` is the index of the
        /// current input instruction.
        fn emit(&mut self, op: AOp, protect: &[u32], q: usize, l: usize, cap: usize) -> Result<(), CompileError> {
            let mut waits = 0;
            loop {
                let p = self.out.len();
                if op.reads.iter().any(|r| self.written_at[r.inst as usize] == usize::MAX) {
                    return Err(CompileError::Capacity("read of a value that is not in registers".into()));
                }
                let early = op.reads.iter().any(|r| p < self.written_at[r.inst as usize] + l);
                if early {
                    self.out.push(AOp::nop());
                    self.stats.nops += 1;
                    continue;
                }
                let mut full = None;
                for &(b, _) in &op.writes {
                    let occupied = self.live[b as usize]
                        .iter()
                        .filter(|&&x| {
                            let last_here = op.reads.iter().any(|r| r.inst == x)
                                && self.future[x as usize].len() <= 1;
                            !last_here
                        })
                        .count();
                    if occupied + 1 > cap {
                        full = Some(b);
                        break;
                    }
                }
                let Some(b) = full else { break };
                let victim = self.live[b as usize]
                    .iter()
                    .copied()
                    .filter(|&x| !op.reads.iter().any(|r| r.inst == x) && !protect.contains(&x))
                    .filter(|&x| self.written_at[x as usize] + l <= p)
                    .max_by_key(|&x| (self.future[x as usize].front().copied().unwrap_or(usize::MAX), x));
                match victim {
                    Some(x) => self.spill(x, q, l),
                    None => {
                        waits += 1;
                        if waits > l {
                            return Err(CompileError::Capacity(format!(
                                "bank {b} cannot hold the operands of one instruction with {cap} registers"
                            )));
                        }
                        self.out.push(AOp::nop());
                        self.stats.nops += 1;
                    }
                }
            }
            let p = self.out.len();
            for r in &op.reads {
                let f = &mut self.future[r.inst as usize];
                f.pop_front();
                if f.is_empty() {
                    let lv = &mut self.live[r.bank as usize];
                    lv.retain(|&y| y != r.inst);
                }
            }
            for &(b, x) in &op.writes {
                self.written_at[x as usize] = p;
                if !self.future[x as usize].is_empty() {
                    self.live[b as usize].push(x);
                }
            }
            self.out.push(op);
            Ok(())
        }

        fn spill(&mut self, x: u32, q: usize, l: usize) {
            let (node, bank) = self.lin.insts[x as usize];
            let b = bank as usize;
            let row = self.free_rows[b].pop().unwrap_or_else(|| {
                self.next_row[b] += 1;
                self.next_row[b] - 1
            });
            self.lin.spill_rows = self.lin.spill_rows.max(row + 1);
            self.out.push(AOp {
                kind: AKind::Store(Row::Spill(row)),
                reads: vec![ARead { bank, inst: x, rst: false }],
                writes: Vec::new(),
            });
            self.stats.spills += 1;
            self.live[b].retain(|&y| y != x);
            let y = self.lin.new_inst(node, bank);
            self.alias.push(y);
            self.alias[x as usize] = y;
            self.written_at.push(usize::MAX);
            let rest = std::mem::take(&mut self.future[x as usize]);
            let next = *rest.front().expect("live instance has a future read");
            self.future.push(rest);
            let due = next.saturating_sub(l - 1).max(q + 1);
            self.restores.entry(due).or_default().push((y, Row::Spill(row), bank));
        }

        #[allow(clippy::too_many_arguments)]
        fn restore(&mut self, y: u32, row: Row, bank: u16, protect: &[u32], q: usize, l: usize, cap: usize) -> Result<(), CompileError> {
            let op = AOp { kind: AKind::Load(row), reads: Vec::new(), writes: vec![(bank, y)] };
            self.emit(op, protect, q, l, cap)?;
            if let Row::Spill(r) = row {
                self.free_rows[bank as usize].push(r);
            }
            self.stats.restores += 1;
            Ok(())
        }
    }

    let mut st = St {
        lin,
        future: &mut future,
        alias: &mut alias,
        written_at: &mut written_at,
        live: &mut live,
        restores: &mut restores,
        free_rows: &mut free_rows,
        next_row: &mut next_row,
        out: &mut out,
        stats: &mut stats,
    };
    for (q, mut op) in ops.into_iter().enumerate() {
        if op.kind == AKind::Nop {
            continue;
        }
        for r in &mut op.reads {
            r.inst = resolve(st.alias, r.inst);
        }
        let protect: Vec<u32> = op.reads.iter().map(|r| r.inst).collect();
        while let Some((&due, _)) = st.restores.first_key_value() {
            if due > q {
                break;
            }
            for (y, row, bank) in st.restores.remove(&due).unwrap() {
                st.restore(y, row, bank, &protect, q, l, cap)?;
            }
        }
        // operands whose restore is not due yet are brought back now
        for &x in &protect {
            let key = st.restores.iter().find(|(_, v)| v.iter().any(|e| e.0 == x)).map(|(&k, _)| k);
            if let Some(k) = key {
                let list = st.restores.get_mut(&k).unwrap();
                let pos = list.iter().position(|e| e.0 == x).unwrap();
                let (y, row, bank) = list.remove(pos);
                if list.is_empty() {
                    st.restores.remove(&k);
                }
                st.restore(y, row, bank, &protect, q, l, cap)?;
            }
        }
        st.emit(op, &[], q, l, cap)?;
    }
    debug_assert!(st.restores.is_empty());
    Ok((out, stats))
}

/// Marks the last read of every instance.
pub fn mark_last_reads(ops: &mut [AOp], insts: usize) {
    let mut seen = vec![false; insts];
    for op in ops.iter_mut().rev() {
        for r in &mut op.reads {
            r.rst = !seen[r.inst as usize];
            seen[r.inst as usize] = true;
        }
    }
}

/// Register slots chosen by the allocation policy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    /// Slot of every read, parallel to `AOp::reads`.
    pub read_slots: Vec<Vec<u16>>,
    pub write_trace: Vec<WriteEvent>,
    pub read_trace: Vec<ReadEvent>,
    /// Occupied slots per bank after each cycle.
    pub occupancy: Vec<Vec<u16>>,
}

/// Replays the lowest-free-slot policy with the pipeline write latency.
/// Reads and releases of a cycle happen before the writes that commit in
/// the same cycle.
pub fn predict_writes(ops: &[AOp], lin: &Linear, cfg: &ArchConfig, record_occupancy: bool) -> Result<Prediction, CompileError> {
    let l = cfg.pipe_stages;
    let r = cfg.regs_per_bank;
    let mut slots: Vec<Vec<Option<u32>>> = vec![vec![None; r]; cfg.banks];
    let mut used = vec![0u16; cfg.banks];
    let mut at: Vec<Option<u16>> = vec![None; lin.insts.len()];
    let mut pred = Prediction { read_slots: Vec::with_capacity(ops.len()), ..Default::default() };
    let total = if ops.is_empty() { 0 } else { ops.len() + l - 1 };
    for c in 0..total {
        if let Some(op) = ops.get(c) {
            let mut rs = Vec::with_capacity(op.reads.len());
            for rd in &op.reads {
                let b = rd.bank as usize;
                let s = at[rd.inst as usize].filter(|&s| slots[b][s as usize] == Some(rd.inst)).ok_or_else(|| {
                    CompileError::ShadowOverflow(format!(
                        "instruction {c} reads node {} from bank {b} before it is written",
                        lin.insts[rd.inst as usize].0
                    ))
                })?;
                rs.push(s);
                pred.read_trace.push(ReadEvent { instr: c as u32, bank: rd.bank, slot: s, node: lin.insts[rd.inst as usize].0 });
                if rd.rst {
                    slots[b][s as usize] = None;
                    used[b] -= 1;
                }
            }
            pred.read_slots.push(rs);
        }
        if c + 1 >= l {
            let w = c + 1 - l;
            let mut writes = ops[w].writes.clone();
            writes.sort_unstable();
            for (bank, x) in writes {
                let b = bank as usize;
                let s = slots[b].iter().position(Option::is_none).ok_or_else(|| {
                    CompileError::ShadowOverflow(format!("bank {b} full when instruction {w} commits"))
                })?;
                slots[b][s] = Some(x);
                used[b] += 1;
                at[x as usize] = Some(s as u16);
                pred.write_trace.push(WriteEvent { instr: w as u32, bank, slot: s as u16, node: lin.insts[x as usize].0 });
            }
        }
        if record_occupancy {
            pred.occupancy.push(used.clone());
        }
    }
    Ok(pred)
}

/// Static hazard check over the traces of a compiled program: the
/// newest write to the slot being read that was issued at least
/// `pipe_stages` instructions earlier must carry the expected value.
pub fn check_spacing(write_trace: &[WriteEvent], read_trace: &[ReadEvent], pipe_stages: usize) -> Vec<String> {
    let mut by_slot: BTreeMap<(u16, u16), Vec<(u32, NodeId)>> = BTreeMap::new();
    for w in write_trace {
        by_slot.entry((w.bank, w.slot)).or_default().push((w.instr, w.node));
    }
    for v in by_slot.values_mut() {
        v.sort_unstable();
    }
    let l = pipe_stages as u32;
    let mut errs = Vec::new();
    for r in read_trace {
        let ws = by_slot.get(&(r.bank, r.slot)).map(Vec::as_slice).unwrap_or(&[]);
        let visible = ws.partition_point(|&(i, _)| i + l <= r.instr);
        if visible > 0 && ws[visible - 1].1 == r.node {
            continue;
        }
        let early = ws[visible..].iter().find(|&&(i, n)| i < r.instr && n == r.node);
        errs.push(match early {
            Some(&(i, _)) => format!(
                "instruction {} reads node {} written by instruction {i} (distance {} < {pipe_stages})",
                r.instr,
                r.node,
                r.instr - i
            ),
            None => format!("instruction {} reads node {} from bank {} slot {} which does not hold it", r.instr, r.node, r.bank, r.slot),
        });
    }
    errs
}

/// Checks that every abstract read is at least `pipe_stages` after the
/// instruction writing its instance.
pub fn check_abstract_spacing(ops: &[AOp], insts: usize, pipe_stages: usize) -> Vec<String> {
    let w = writer_positions(ops, insts);
    let mut errs = Vec::new();
    for (p, op) in ops.iter().enumerate() {
        for r in &op.reads {
            match w[r.inst as usize] {
                Some(wp) if wp < p && p - wp >= pipe_stages => {}
                other => errs.push(format!("op {p} reads instance {} written at {other:?}", r.inst)),
            }
        }
    }
    errs
}
