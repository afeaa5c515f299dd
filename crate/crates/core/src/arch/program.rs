use serde::{Deserialize, Serialize};

use super::codec::{decode, Bitstream};
use super::isa::{InstrCounts, Instruction};
use super::{derive_config, ArchConfig, ArchError, Topology};
use crate::dag::{DagStats, NodeId};

pub const MAGIC: &[u8; 4] = b"DPU2";
pub const FILE_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 2 + 2 + 1 + 4 + 4 + 8;

/// A register write predicted by the compiler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WriteEvent {
    pub instr: u32,
    pub bank: u16,
    pub slot: u16,
    pub node: NodeId,
}

/// A register read with the DAG value it is expected to return.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReadEvent {
    pub instr: u32,
    pub bank: u16,
    pub slot: u16,
    pub node: NodeId,
}

/// Location of a DAG value in data memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemSlot {
    pub node: NodeId,
    pub row: u32,
    pub col: u16,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemLayout {
    /// Where the host places each input value before execution.
    pub inputs: Vec<MemSlot>,
    /// Where each DAG output can be read after execution.
    pub outputs: Vec<MemSlot>,
    /// Rows touched by the program, spill area included.
    pub rows_used: u32,
}

/// Compile-time statistics carried next to the program.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgramMeta {
    pub source: Option<DagStats>,
    pub binarized: Option<DagStats>,
    pub seed: u64,
    pub lambda: f64,
    pub window: usize,
    pub blocks: usize,
    pub counts: InstrCounts,
    pub conflicts: usize,
    pub spills: usize,
    pub spill_copies: usize,
    pub predicted_cycles: u64,
    /// Words of data memory holding inputs and outputs.
    pub data_words: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledProgram {
    pub cfg: ArchConfig,
    pub instrs: Vec<Instruction>,
    pub bitstream: Bitstream,
    pub write_trace: Vec<WriteEvent>,
    pub read_trace: Vec<ReadEvent>,
    pub layout: MemLayout,
    pub meta: ProgramMeta,
}

/// Everything except the instructions, for the JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub cfg: ArchConfig,
    pub layout: MemLayout,
    pub write_trace: Vec<WriteEvent>,
    pub read_trace: Vec<ReadEvent>,
    pub meta: ProgramMeta,
}

impl CompiledProgram {
    pub fn instruction_bytes(&self) -> usize {
        self.bitstream.len_bits.div_ceil(8)
    }

    pub fn data_bytes(&self) -> usize {
        self.meta.data_words * 4
    }

    pub fn cycles(&self) -> u64 {
        if self.instrs.is_empty() {
            0
        } else {
            self.instrs.len() as u64 + self.cfg.pipe_stages as u64 - 1
        }
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            cfg: self.cfg,
            layout: self.layout.clone(),
            write_trace: self.write_trace.clone(),
            read_trace: self.read_trace.clone(),
            meta: self.meta.clone(),
        }
    }

    /// Binary program file: header then the dense bitstream, zero padded
    /// to a byte boundary.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let c = &self.cfg;
        let mut out = Vec::with_capacity(HEADER_LEN + self.bitstream.bytes.len());
        out.extend_from_slice(MAGIC);
        out.push(FILE_VERSION);
        out.push(c.depth as u8);
        out.extend_from_slice(&(c.banks as u16).to_le_bytes());
        out.extend_from_slice(&(c.regs_per_bank as u16).to_le_bytes());
        out.push(c.topology.code());
        out.extend_from_slice(&(c.data_mem_words as u32).to_le_bytes());
        out.extend_from_slice(&(self.instrs.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.bitstream.len_bits as u64).to_le_bytes());
        out.extend_from_slice(&self.bitstream.bytes);
        out
    }

    /// Rebuilds a program from the binary file and its sidecar. The
    /// configuration comes from the binary header and must match the
    /// sidecar.
    pub fn from_files(bytes: &[u8], sidecar: Sidecar) -> Result<Self, ArchError> {
        let (cfg, count, bits) = read_program_file(bytes)?;
        if cfg.depth != sidecar.cfg.depth
            || cfg.banks != sidecar.cfg.banks
            || cfg.regs_per_bank != sidecar.cfg.regs_per_bank
            || cfg.topology != sidecar.cfg.topology
        {
            return Err(ArchError::File("sidecar configuration does not match program header".into()));
        }
        let instrs = decode(&bits, &cfg)?;
        if instrs.len() != count {
            return Err(ArchError::File(format!("header declares {count} instructions, decoded {}", instrs.len())));
        }
        let cfg = ArchConfig { freq_hz: sidecar.cfg.freq_hz, ..cfg };
        Ok(CompiledProgram {
            cfg,
            instrs,
            bitstream: bits,
            write_trace: sidecar.write_trace,
            read_trace: sidecar.read_trace,
            layout: sidecar.layout,
            meta: sidecar.meta,
        })
    }
}

/// Parses the header of a program file; returns the configuration, the
/// declared instruction count and the bitstream.
pub fn read_program_file(bytes: &[u8]) -> Result<(ArchConfig, usize, Bitstream), ArchError> {
    if bytes.len() < HEADER_LEN {
        return Err(ArchError::File("file shorter than header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(ArchError::File("bad magic".into()));
    }
    if bytes[4] != FILE_VERSION {
        return Err(ArchError::File(format!("unsupported version {}", bytes[4])));
    }
    let depth = bytes[5] as usize;
    let banks = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let regs = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let topology = Topology::from_code(bytes[10]).ok_or_else(|| ArchError::File("bad topology code".into()))?;
    let words = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[15..19].try_into().unwrap()) as usize;
    let len_bits = u64::from_le_bytes(bytes[19..27].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != len_bits.div_ceil(8) {
        return Err(ArchError::File(format!("body has {} bytes, header declares {len_bits} bits", body.len())));
    }
    let cfg = derive_config(depth, banks, regs, topology)?.with_data_mem_words(words);
    Ok((cfg, count, Bitstream::from_bytes(body.to_vec(), len_bits)))
}
