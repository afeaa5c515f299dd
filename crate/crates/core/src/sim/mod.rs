//! Cycle-accurate functional model of the processor.
//!
//! One instruction issues per cycle. Within a cycle the issuing
//! instruction first performs its register reads (clearing valid bits
//! where requested) and its data-memory access, then the register writes
//! of the instruction issued `pipe_stages - 1` cycles earlier commit,
//! each at the lowest free slot of its bank.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::arch::{ArchConfig, ArchError, CompiledProgram, InstrCounts, Instruction, PeId, ReadPorts, Topology, WriteEvent};
use crate::dag::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Decode(#[from] ArchError),
    #[error("cycle {cycle}: read of empty slot {slot} in bank {bank}")]
    InvalidRead { cycle: u64, bank: usize, slot: usize },
    #[error("cycle {cycle}: bank {bank} is full")]
    BankFull { cycle: u64, bank: usize },
    #[error("no value supplied for input node {0}")]
    MissingInput(NodeId),
    #[error("cycle {cycle}: {msg}")]
    Contract { cycle: u64, msg: String },
}

/// Lowest slot whose valid bit is clear.
pub fn priority_encode(valid: &[bool]) -> Option<usize> {
    valid.iter().position(|v| !v)
}

/// Per-cycle activity, for trace dumps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleTrace {
    pub cycle: u64,
    /// Kind of the instruction issued this cycle (`None` while draining).
    pub kind: Option<&'static str>,
    /// `(bank, slot)` of every register read.
    pub reads: Vec<(u16, u16)>,
    /// `(bank, slot, value)` of every committed write.
    pub writes: Vec<(u16, u16, f32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub outputs: BTreeMap<NodeId, f32>,
    pub cycles: u64,
    pub stats: InstrCounts,
    pub runtime_write_trace: Vec<WriteEvent>,
    pub hazard_violations: Vec<String>,
    /// Highest number of valid slots seen in each bank.
    pub peak_occupancy: Vec<u16>,
    pub trace: Option<Vec<CycleTrace>>,
}

impl SimResult {
    /// Positions where the runtime trace and `expected` disagree on
    /// `(instr, bank, slot)`.
    pub fn trace_mismatches(&self, expected: &[WriteEvent]) -> usize {
        let key = |w: &WriteEvent| (w.instr, w.bank, w.slot);
        let diff = self.runtime_write_trace.iter().zip(expected).filter(|(a, b)| key(a) != key(b)).count();
        diff + self.runtime_write_trace.len().abs_diff(expected.len())
    }
}

/// Operations per second in units of 1e9.
pub fn throughput_gops(node_count: usize, cycles: u64, freq_hz: f64) -> f64 {
    if cycles == 0 {
        return 0.0;
    }
    node_count as f64 * freq_hz / cycles as f64 / 1e9
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Slot {
    value: f32,
    valid: bool,
    tag: Option<NodeId>,
}

const EMPTY: Slot = Slot { value: 0.0, valid: false, tag: None };

struct Pending {
    issue: u64,
    writes: Vec<(usize, f32, Option<NodeId>)>,
}

/// Register file, data memory and write pipeline.
pub struct Machine {
    cfg: ArchConfig,
    regs: Vec<Vec<Slot>>,
    mem: Vec<f32>,
    pipe: VecDeque<Pending>,
    cycle: u64,
    write_tag: HashMap<(u32, u16), NodeId>,
    read_expect: HashMap<(u32, u16), NodeId>,
    trace: Option<Vec<CycleTrace>>,
    pub runtime_write_trace: Vec<WriteEvent>,
    pub hazard_violations: Vec<String>,
    pub peak_occupancy: Vec<u16>,
    occupancy: Vec<u16>,
    pe_val: Vec<f32>,
}

impl Machine {
    pub fn new(cfg: &ArchConfig) -> Self {
        Machine {
            cfg: *cfg,
            regs: vec![vec![EMPTY; cfg.regs_per_bank]; cfg.banks],
            mem: vec![0.0; cfg.data_mem_rows() * cfg.banks],
            pipe: VecDeque::new(),
            cycle: 0,
            write_tag: HashMap::new(),
            read_expect: HashMap::new(),
            trace: None,
            runtime_write_trace: Vec::new(),
            hazard_violations: Vec::new(),
            peak_occupancy: vec![0; cfg.banks],
            occupancy: vec![0; cfg.banks],
            pe_val: vec![0.0; cfg.total_pes()],
        }
    }

    /// Enables hazard detection against the value tags of a compiled program.
    pub fn with_tags(mut self, p: &CompiledProgram) -> Self {
        self.write_tag = p.write_trace.iter().map(|w| ((w.instr, w.bank), w.node)).collect();
        self.read_expect = p.read_trace.iter().map(|r| ((r.instr, r.bank), r.node)).collect();
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn mem(&self) -> &[f32] {
        &self.mem
    }

    pub fn mem_mut(&mut self) -> &mut [f32] {
        &mut self.mem
    }

    /// Valid bit and value of a register.
    pub fn reg(&self, bank: usize, slot: usize) -> (bool, f32) {
        let s = self.regs[bank][slot];
        (s.valid, s.value)
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    fn err(&self, msg: String) -> SimError {
        SimError::Contract { cycle: self.cycle, msg }
    }

    fn read_ports(&mut self, p: &ReadPorts, reads: &mut Vec<(u16, u16)>) -> Result<Vec<Option<f32>>, SimError> {
        let mut out = vec![None; self.cfg.banks];
        let instr = self.cycle as u32;
        for b in 0..self.cfg.banks {
            if !p.en[b] {
                continue;
            }
            let s = p.addr[b] as usize;
            let slot = self.regs[b][s];
            if !slot.valid {
                return Err(SimError::InvalidRead { cycle: self.cycle, bank: b, slot: s });
            }
            if let Some(&want) = self.read_expect.get(&(instr, b as u16)) {
                if slot.tag != Some(want) {
                    let in_flight = self.pipe.iter().any(|pw| pw.writes.iter().any(|w| w.0 == b && w.2 == Some(want)));
                    if in_flight {
                        self.hazard_violations.push(format!(
                            "cycle {}: bank {b} slot {s} read before node {want} was written",
                            self.cycle
                        ));
                    } else {
                        return Err(self.err(format!("bank {b} slot {s} holds {:?}, expected node {want}", slot.tag)));
                    }
                }
            }
            reads.push((b as u16, s as u16));
            out[b] = Some(slot.value);
            if p.rst[b] {
                self.regs[b][s].valid = false;
                self.occupancy[b] -= 1;
            }
        }
        Ok(out)
    }

    fn pe_output(&self, pe: PeId) -> f32 {
        self.pe_val[self.cfg.pe_flat(pe)]
    }

    /// Issues one instruction (or none, while draining) and advances a cycle.
    pub fn step(&mut self, ins: Option<&Instruction>) -> Result<(), SimError> {
        let b = self.cfg.banks;
        let instr = self.cycle as u32;
        let mut reads = Vec::new();
        let mut writes: Vec<(usize, f32, Option<NodeId>)> = Vec::new();
        let tag = |m: &Self, bank: usize| m.write_tag.get(&(instr, bank as u16)).copied();
        match ins {
            None | Some(Instruction::Nop) => {}
            Some(Instruction::Exec(e)) => {
                let vals = self.read_ports(&e.read, &mut reads)?;
                let lpt = self.cfg.leaves_per_tree();
                let leaf = |j: usize| vals[e.in_route[j] as usize].unwrap_or(0.0);
                for f in 0..self.cfg.total_pes() {
                    let pe = self.cfg.pe_from_flat(f);
                    let (l, r) = if pe.layer == 1 {
                        let base = pe.tree * lpt + 2 * pe.index;
                        (leaf(base), leaf(base + 1))
                    } else {
                        let child = |side| PeId { tree: pe.tree, layer: pe.layer - 1, index: 2 * pe.index + side };
                        (self.pe_output(child(0)), self.pe_output(child(1)))
                    };
                    self.pe_val[f] = e.pe_cfg[f].apply(l, r);
                }
                for bank in 0..b {
                    let o = e.out_sel[bank];
                    if !o.write_en {
                        continue;
                    }
                    let pe = match self.cfg.topology {
                        Topology::InputXbarOutputPerLayer => self.cfg.pe_over_bank(bank, o.sel as usize + 1),
                        Topology::FullXbarBoth => self.cfg.pe_from_flat(o.sel as usize),
                    };
                    writes.push((bank, self.pe_output(pe), tag(self, bank)));
                }
            }
            Some(Instruction::Copy(c)) => {
                let vals = self.read_ports(&c.read, &mut reads)?;
                for bank in 0..b {
                    if !c.write_en[bank] {
                        continue;
                    }
                    let src = c.route[bank] as usize;
                    let v = vals[src].ok_or_else(|| self.err(format!("copy into bank {bank} from unread bank {src}")))?;
                    writes.push((bank, v, tag(self, bank)));
                }
            }
            Some(Instruction::Load(l)) => {
                let base = l.mem_addr as usize * b;
                for bank in 0..b {
                    if l.mask[bank] {
                        writes.push((bank, self.mem[base + bank], tag(self, bank)));
                    }
                }
            }
            Some(Instruction::Store(s)) => {
                let ports = ReadPorts { addr: s.read_addr.clone(), en: s.mask.clone(), rst: s.valid_rst.clone() };
                let vals = self.read_ports(&ports, &mut reads)?;
                let base = s.mem_addr as usize * b;
                for (bank, v) in vals.iter().enumerate() {
                    if let Some(v) = v {
                        self.mem[base + bank] = *v;
                    }
                }
            }
        }
        if ins.is_some() {
            self.pipe.push_back(Pending { issue: self.cycle, writes });
        }
        let mut committed = Vec::new();
        let l = self.cfg.pipe_stages as u64;
        let now = self.cycle;
        if let Some(p) = self.pipe.pop_front_if(|p| p.issue + l - 1 == now) {
            let mut ws = p.writes;
            ws.sort_by_key(|w| w.0);
            for (bank, value, tag) in ws {
                let valid: Vec<bool> = self.regs[bank].iter().map(|s| s.valid).collect();
                let s = priority_encode(&valid).ok_or(SimError::BankFull { cycle: self.cycle, bank })?;
                self.regs[bank][s] = Slot { value, valid: true, tag };
                self.occupancy[bank] += 1;
                self.peak_occupancy[bank] = self.peak_occupancy[bank].max(self.occupancy[bank]);
                self.runtime_write_trace.push(WriteEvent {
                    instr: p.issue as u32,
                    bank: bank as u16,
                    slot: s as u16,
                    node: tag.unwrap_or(NodeId::MAX),
                });
                committed.push((bank as u16, s as u16, value));
            }
        }
        if let Some(t) = self.trace.as_mut() {
            t.push(CycleTrace { cycle: self.cycle, kind: ins.map(|i| i.kind().name()), reads, writes: committed });
        }
        self.cycle += 1;
        Ok(())
    }

    /// Runs instructions to completion, including the pipeline drain.
    pub fn run_instrs(&mut self, instrs: &[Instruction]) -> Result<(), SimError> {
        for ins in instrs {
            self.step(Some(ins))?;
        }
        while !self.pipe.is_empty() {
            self.step(None)?;
        }
        Ok(())
    }
}

/// Options for [`run_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
}

/// Executes a compiled program on the given input values.
pub fn run(program: &CompiledProgram, inputs: &BTreeMap<NodeId, f64>) -> Result<SimResult, SimError> {
    run_with(program, inputs, RunOptions::default())
}

pub fn run_with(program: &CompiledProgram, inputs: &BTreeMap<NodeId, f64>, opts: RunOptions) -> Result<SimResult, SimError> {
    let cfg = &program.cfg;
    let mut m = Machine::new(cfg).with_tags(program);
    if opts.trace {
        m = m.with_trace();
    }
    for s in &program.layout.inputs {
        let v = inputs.get(&s.node).ok_or(SimError::MissingInput(s.node))?;
        m.mem[s.row as usize * cfg.banks + s.col as usize] = *v as f32;
    }
    m.run_instrs(&program.instrs)?;
    let outputs = program
        .layout
        .outputs
        .iter()
        .map(|s| (s.node, m.mem[s.row as usize * cfg.banks + s.col as usize]))
        .collect();
    Ok(SimResult {
        outputs,
        cycles: if program.instrs.is_empty() { 0 } else { m.cycle },
        stats: InstrCounts::of(&program.instrs),
        runtime_write_trace: m.runtime_write_trace,
        hazard_violations: m.hazard_violations,
        peak_occupancy: m.peak_occupancy,
        trace: m.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priority_encoder() {
        assert_eq!(priority_encode(&[false; 4]), Some(0));
        assert_eq!(priority_encode(&[true, true, false, true, false]), Some(2));
        assert_eq!(priority_encode(&[true; 4]), None);
    }

    #[test]
    fn gops_arithmetic() {
        assert!((throughput_gops(4200, 300, 3e8) - 4.2).abs() < 1e-12);
        assert!((throughput_gops(4200, 600, 3e8) - 2.1).abs() < 1e-12);
    }
}
