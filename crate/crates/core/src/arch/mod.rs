//! Architecture model: machine geometry, the instruction set and its
//! dense bit-level encoding.

mod bankset;
pub mod codec;
mod config;
pub mod isa;
pub mod program;
mod random;

use thiserror::Error;

pub use bankset::BankSet;
pub use codec::{
    decode, encode, explicit_addr_bit_length, instr_bit_length, program_bits, program_bits_explicit_addr, Bitstream,
};
pub use config::{derive_config, ArchConfig, PeId, Topology, DEFAULT_DATA_MEM_WORDS, DEFAULT_FREQ_HZ};
pub use isa::{Copy, Exec, InstrCounts, InstrKind, Instruction, Load, OutSel, PeOp, ReadPorts, Store};
pub use random::{random_instruction, random_stream};
pub use program::{CompiledProgram, MemLayout, MemSlot, ProgramMeta, ReadEvent, Sidecar, WriteEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArchError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("unknown topology `{0}`")]
    UnknownTopology(String),
    #[error("cannot encode instruction: {0}")]
    Encode(String),
    #[error("bitstream truncated at bit {offset} ({needed} more bits needed)")]
    Truncated { offset: usize, needed: usize },
    #[error("bad opcode {opcode} at bit {offset}")]
    BadOpcode { offset: usize, opcode: u8 },
    #[error("field {what} out of range at bit {offset}")]
    BadField { offset: usize, what: &'static str },
    #[error("program file: {0}")]
    File(String),
}

/// The 48 (D, B, R) grid points of the standard design-space sweep;
/// infeasible points (B < 2^D) included.
pub fn sweep_grid() -> Vec<(usize, usize, usize)> {
    let mut g = Vec::new();
    for d in [1, 2, 3] {
        for b in [8, 16, 32, 64] {
            for r in [16, 32, 64, 128] {
                g.push((d, b, r));
            }
        }
    }
    g
}
