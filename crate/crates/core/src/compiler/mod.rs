//! The compiler: block decomposition, bank mapping, scheduling and
//! emission of a [`CompiledProgram`].

pub mod blocks;
pub mod mapping;
pub mod schedule;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::arch::{
    encode, ArchConfig, ArchError, CompiledProgram, Copy, Exec, InstrCounts, Instruction, Load, MemLayout, MemSlot,
    OutSel, PeOp, ProgramMeta, ReadPorts, Store, Topology,
};
use crate::dag::{binarize, ComputeDag, DagError, NodeId, OpKind};
use blocks::{decompose, BlockGraph};
use mapping::{block_layout, map, random_map, Mapping};
use schedule::{insert_spills, linearize, mark_last_reads, predict_writes, reorder, AKind, AOp, Linear, Prediction, Row, SpillStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("register capacity exceeded: {0}")]
    Capacity(String),
    #[error("register allocation replay failed: {0}")]
    ShadowOverflow(String),
    #[error("program needs {need} data-memory rows, machine has {have}")]
    DataMemory { need: usize, have: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mapper {
    /// Conflict-aware bank assignment.
    #[default]
    Compiler,
    /// Uniformly random banks (baseline).
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompileOptions {
    pub seed: u64,
    /// Weight of the traversal-distance penalty in block fitness.
    pub lambda: f64,
    /// Look-ahead of the hazard-avoiding reorder.
    pub window: usize,
    pub mapper: Mapper,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { seed: 0, lambda: 0.05, window: 300, mapper: Mapper::Compiler }
    }
}

/// A compiled program together with the intermediate results.
#[derive(Clone, Debug)]
pub struct Compilation {
    pub program: CompiledProgram,
    pub binarized: ComputeDag,
    pub blocks: BlockGraph,
    pub mapping: Mapping,
    pub spill: SpillStats,
    /// Nops inserted by the reorder pass.
    pub reorder_nops: usize,
    /// Per-cycle occupied slots per bank (`[cycle][bank]`).
    pub occupancy: Vec<Vec<u16>>,
}

/// Compiles a DAG for `cfg`.
pub fn compile(dag: &ComputeDag, cfg: &ArchConfig, opts: &CompileOptions) -> Result<CompiledProgram, CompileError> {
    compile_detailed(dag, cfg, opts, false).map(|c| c.program)
}

/// Like [`compile`], also returning blocks, mapping and statistics.
/// `occupancy` enables the per-cycle register occupancy record.
pub fn compile_detailed(
    dag: &ComputeDag,
    cfg: &ArchConfig,
    opts: &CompileOptions,
    occupancy: bool,
) -> Result<Compilation, CompileError> {
    let source = dag.validate()?;
    let bin = binarize(dag)?;
    let bstats = bin.validate()?;
    let bg = decompose(&bin, cfg, opts.lambda);
    let m = match opts.mapper {
        Mapper::Compiler => map(&bg, &bin, cfg, opts.seed),
        Mapper::Random => random_map(&bg, &bin, cfg, opts.seed),
    };
    let mut lin = linearize(&bg, &m, &bin, cfg.banks);
    let ops = std::mem::take(&mut lin.ops);
    let ordered = reorder(&ops, lin.insts.len(), cfg, opts.window);
    let reorder_nops = ordered.len() - ops.len();
    let (mut fin, spill) = insert_spills(&mut lin, ordered, cfg)?;
    mark_last_reads(&mut fin, lin.insts.len());
    let pred = predict_writes(&fin, &lin, cfg, occupancy)?;

    let rows = (lin.input_rows + lin.output_rows + lin.spill_rows) as usize;
    if rows > cfg.data_mem_rows() {
        return Err(CompileError::DataMemory { need: rows, have: cfg.data_mem_rows() });
    }
    let instrs = concretize(&fin, &pred, &bg, &m, &lin, cfg);
    let bitstream = encode(&instrs, cfg)?;
    let layout = memory_layout(&lin, &bin);
    let counts = InstrCounts::of(&instrs);
    let meta = ProgramMeta {
        source: Some(source),
        binarized: Some(bstats),
        seed: opts.seed,
        lambda: opts.lambda,
        window: opts.window,
        blocks: bg.blocks.len(),
        counts,
        conflicts: m.conflicts.len(),
        spills: spill.spills,
        spill_copies: 0,
        predicted_cycles: if instrs.is_empty() { 0 } else { (instrs.len() + cfg.pipe_stages - 1) as u64 },
        data_words: lin.inputs.len() + lin.outputs.len(),
    };
    let program = CompiledProgram {
        cfg: *cfg,
        instrs,
        bitstream,
        write_trace: pred.write_trace,
        read_trace: pred.read_trace,
        layout,
        meta,
    };
    Ok(Compilation {
        program,
        binarized: bin,
        blocks: bg,
        mapping: m,
        spill,
        reorder_nops,
        occupancy: pred.occupancy,
    })
}

fn resolve_row(row: Row, lin: &Linear) -> u32 {
    match row {
        Row::Input(r) => r,
        Row::Output(r) => lin.input_rows + r,
        Row::Spill(r) => lin.input_rows + lin.output_rows + r,
    }
}

fn memory_layout(lin: &Linear, dag: &ComputeDag) -> MemLayout {
    let slot = |c: &schedule::Cell| MemSlot { node: c.node, row: resolve_row(c.row, lin), col: c.col };
    let mut inputs: Vec<MemSlot> = lin.inputs.iter().map(slot).collect();
    inputs.sort_by_key(|s| s.node);
    let by_node: BTreeMap<NodeId, MemSlot> = inputs.iter().map(|s| (s.node, *s)).chain(lin.outputs.iter().map(|c| (c.node, slot(c)))).collect();
    let outputs = dag.outputs().iter().map(|v| by_node[v]).collect();
    MemLayout { inputs, outputs, rows_used: lin.input_rows + lin.output_rows + lin.spill_rows }
}

/// Turns the scheduled abstract list into machine instructions.
fn concretize(ops: &[AOp], pred: &Prediction, bg: &BlockGraph, m: &Mapping, lin: &Linear, cfg: &ArchConfig) -> Vec<Instruction> {
    let b = cfg.banks;
    let ports = |op: &AOp, slots: &[u16]| {
        let mut p = ReadPorts::idle(b);
        for (r, &s) in op.reads.iter().zip(slots) {
            p.addr[r.bank as usize] = s;
            p.en[r.bank as usize] = true;
            p.rst[r.bank as usize] = r.rst;
        }
        p
    };
    ops.iter()
        .zip(&pred.read_slots)
        .map(|(op, slots)| match op.kind {
            AKind::Nop => Instruction::Nop,
            AKind::Load(row) => {
                let mut mask = vec![false; b];
                for &(bank, _) in &op.writes {
                    mask[bank as usize] = true;
                }
                Instruction::Load(Load { mem_addr: resolve_row(row, lin), mask })
            }
            AKind::Store(row) => {
                let p = ports(op, slots);
                Instruction::Store(Store { mem_addr: resolve_row(row, lin), mask: p.en, read_addr: p.addr, valid_rst: p.rst })
            }
            AKind::Copy => {
                let mut route = vec![0u16; b];
                let mut write_en = vec![false; b];
                let src = op.reads[0].bank;
                for &(bank, _) in &op.writes {
                    route[bank as usize] = src;
                    write_en[bank as usize] = true;
                }
                Instruction::Copy(Copy { read: ports(op, slots), route, write_en })
            }
            AKind::Exec(k) => {
                let block = &bg.blocks[k];
                let bm = &m.blocks[k];
                let lay = block_layout(block, &bm.placements, cfg);
                let pe_cfg = lay.pe_op.iter().map(|o| o.unwrap_or(PeOp::Add)).collect();
                let bank_of_input: BTreeMap<NodeId, u16> = block.inputs.iter().copied().zip(bm.read_bank.iter().copied()).collect();
                let in_route = lay.leaf_node.iter().map(|v| v.map_or(0, |v| bank_of_input[&v])).collect();
                let mut out_sel = vec![OutSel::default(); b];
                for (&p, &pe) in bm.write_bank.iter().zip(&bm.write_pe) {
                    let sel = match cfg.topology {
                        Topology::InputXbarOutputPerLayer => pe.layer - 1,
                        Topology::FullXbarBoth => cfg.pe_flat(pe),
                    };
                    out_sel[p as usize] = OutSel { write_en: true, sel: sel as u16 };
                }
                Instruction::Exec(Exec { pe_cfg, read: ports(op, slots), in_route, out_sel })
            }
        })
        .collect()
}

/// Nodes of `dag` that are computed (not inputs).
pub fn op_count(dag: &ComputeDag) -> usize {
    dag.nodes().iter().filter(|n| n.op != OpKind::Input).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::derive_config;
    use crate::dag::evaluate_reference;
    use crate::ingest::random_dag;
    use crate::sim::run;

    fn roundtrip(dag: &ComputeDag, cfg: &ArchConfig, seed: u64) -> Compilation {
        let c = compile_detailed(dag, cfg, &CompileOptions { seed, ..Default::default() }, false).unwrap();
        let inputs = dag.default_inputs().unwrap();
        let want = evaluate_reference(dag, &inputs).unwrap();
        let res = run(&c.program, &inputs).unwrap();
        assert!(res.hazard_violations.is_empty(), "{:?}", &res.hazard_violations[..3.min(res.hazard_violations.len())]);
        assert_eq!(res.trace_mismatches(&c.program.write_trace), 0);
        for (&v, &got) in &res.outputs {
            let w = want[v as usize];
            let rel = (f64::from(got) - w).abs() / w.abs().max(f64::from(f32::MIN_POSITIVE));
            assert!(rel <= 1e-5, "node {v}: {got} vs {w}");
        }
        c
    }

    #[test]
    fn sum_then_product() {
        let mut d = ComputeDag::new();
        let x1 = d.add_input(Some(2.0));
        let x2 = d.add_input(Some(3.0));
        let x3 = d.add_input(Some(4.0));
        let a = d.add_op(OpKind::Sum, vec![x1, x2]);
        let b = d.add_op(OpKind::Product, vec![a, x3]);
        d.mark_output(b);
        let cfg = derive_config(1, 2, 4, Topology::InputXbarOutputPerLayer).unwrap();
        let c = roundtrip(&d, &cfg, 0);
        let res = run(&c.program, &d.default_inputs().unwrap()).unwrap();
        assert_eq!(res.outputs[&b], 20.0);
    }

    #[test]
    fn random_dags_end_to_end() {
        for (i, (dd, b, r)) in [(1, 8, 16), (2, 16, 32), (3, 64, 32), (3, 64, 16)].into_iter().enumerate() {
            for topo in [Topology::InputXbarOutputPerLayer, Topology::FullXbarBoth] {
                let cfg = derive_config(dd, b, r, topo).unwrap();
                let dag = random_dag(800, 3, 25.0, i as u64);
                roundtrip(&dag, &cfg, 3);
            }
        }
    }
}
