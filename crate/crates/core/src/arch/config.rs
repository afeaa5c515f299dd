use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ArchError, BankSet};

/// Output interconnect between PE trees and register banks. The input
/// side is a full crossbar in both variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Each bank is wired to one PE per layer: the PE whose leaf span
    /// covers the bank.
    InputXbarOutputPerLayer,
    /// Any PE can write any bank.
    FullXbarBoth,
}

impl Topology {
    pub fn code(self) -> u8 {
        match self {
            Topology::InputXbarOutputPerLayer => 0,
            Topology::FullXbarBoth => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Topology::InputXbarOutputPerLayer),
            1 => Some(Topology::FullXbarBoth),
            _ => None,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::InputXbarOutputPerLayer => "per-layer",
            Topology::FullXbarBoth => "full-xbar",
        })
    }
}

impl FromStr for Topology {
    type Err = ArchError;
    fn from_str(s: &str) -> Result<Self, ArchError> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "per-layer" | "input-xbar-output-per-layer" | "b" => Ok(Topology::InputXbarOutputPerLayer),
            "full-xbar" | "full-xbar-both" | "a" => Ok(Topology::FullXbarBoth),
            _ => Err(ArchError::UnknownTopology(s.to_string())),
        }
    }
}

/// Default data memory size in 32-bit words.
pub const DEFAULT_DATA_MEM_WORDS: usize = 1 << 20;
pub const DEFAULT_FREQ_HZ: f64 = 3.0e8;

/// One architecture instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub depth: usize,
    pub banks: usize,
    pub regs_per_bank: usize,
    pub trees: usize,
    pub pipe_stages: usize,
    pub topology: Topology,
    pub data_mem_words: usize,
    pub freq_hz: f64,
}

/// A PE in tree `tree`, layer `layer` (1 = next to the leaves, `D` =
/// root), position `index` within that layer (`0 .. 2^(D - layer)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PeId {
    pub tree: usize,
    pub layer: usize,
    pub index: usize,
}

pub fn derive_config(depth: usize, banks: usize, regs: usize, topology: Topology) -> Result<ArchConfig, ArchError> {
    if depth == 0 || depth > 7 {
        return Err(ArchError::Geometry(format!("depth {depth} outside 1..=7")));
    }
    if !banks.is_power_of_two() || banks < 2 {
        return Err(ArchError::Geometry(format!("bank count {banks} is not a power of two >= 2")));
    }
    if banks > 128 {
        return Err(ArchError::Geometry(format!("bank count {banks} exceeds the supported maximum of 128")));
    }
    if banks < 1 << depth {
        return Err(ArchError::Geometry(format!("{banks} banks cannot feed a tree of depth {depth}")));
    }
    if !regs.is_power_of_two() || regs < 2 {
        return Err(ArchError::Geometry(format!("register count {regs} is not a power of two >= 2")));
    }
    Ok(ArchConfig {
        depth,
        banks,
        regs_per_bank: regs,
        trees: banks >> depth,
        pipe_stages: depth + 1,
        topology,
        data_mem_words: DEFAULT_DATA_MEM_WORDS,
        freq_hz: DEFAULT_FREQ_HZ,
    })
}

pub(crate) fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

impl ArchConfig {
    pub fn with_data_mem_words(mut self, words: usize) -> Self {
        self.data_mem_words = words;
        self
    }

    pub fn leaves_per_tree(&self) -> usize {
        1 << self.depth
    }

    pub fn pes_per_tree(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn total_pes(&self) -> usize {
        self.trees * self.pes_per_tree()
    }

    pub fn data_mem_rows(&self) -> usize {
        (self.data_mem_words / self.banks).max(1)
    }

    pub fn reg_addr_bits(&self) -> usize {
        ceil_log2(self.regs_per_bank)
    }

    pub fn bank_bits(&self) -> usize {
        ceil_log2(self.banks)
    }

    pub fn layer_bits(&self) -> usize {
        ceil_log2(self.depth)
    }

    pub fn mem_addr_bits(&self) -> usize {
        ceil_log2(self.data_mem_rows())
    }

    /// Width of each bank's output selector in an Exec.
    pub fn out_sel_bits(&self) -> usize {
        match self.topology {
            Topology::InputXbarOutputPerLayer => self.layer_bits(),
            Topology::FullXbarBoth => ceil_log2(self.total_pes()),
        }
    }

    /// Dense index of a PE: tree-major, then layers bottom-up, then
    /// position.
    pub fn pe_flat(&self, pe: PeId) -> usize {
        let d = self.depth;
        let before: usize = (1..pe.layer).map(|l| 1usize << (d - l)).sum();
        pe.tree * self.pes_per_tree() + before + pe.index
    }

    pub fn pe_from_flat(&self, flat: usize) -> PeId {
        let tree = flat / self.pes_per_tree();
        let mut rest = flat % self.pes_per_tree();
        let mut layer = 1;
        while rest >= 1 << (self.depth - layer) {
            rest -= 1 << (self.depth - layer);
            layer += 1;
        }
        PeId { tree, layer, index: rest }
    }

    pub fn all_pes(&self) -> impl Iterator<Item = PeId> + '_ {
        (0..self.total_pes()).map(|f| self.pe_from_flat(f))
    }

    /// Banks whose indices equal the leaves under `pe`.
    pub fn leaf_span(&self, pe: PeId) -> BankSet {
        let w = 1usize << pe.layer;
        BankSet::range(pe.tree * self.leaves_per_tree() + pe.index * w, w)
    }

    /// The PE at `layer` whose span contains `bank`.
    pub fn pe_over_bank(&self, bank: usize, layer: usize) -> PeId {
        let local = bank % self.leaves_per_tree();
        PeId { tree: bank / self.leaves_per_tree(), layer, index: local >> layer }
    }

    /// Banks a PE can write.
    pub fn writable_banks(&self, pe: PeId) -> BankSet {
        match self.topology {
            Topology::FullXbarBoth => BankSet::full(self.banks),
            Topology::InputXbarOutputPerLayer => self.leaf_span(pe),
        }
    }

    pub fn label(&self) -> String {
        format!("D{}_B{}_R{}", self.depth, self.banks, self.regs_per_bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_edp_geometry() {
        let c = derive_config(3, 64, 32, Topology::InputXbarOutputPerLayer).unwrap();
        assert_eq!(c.trees, 8);
        assert_eq!(c.total_pes(), 56);
        assert_eq!(c.pipe_stages, 4);
    }

    #[test]
    fn smallest_machine() {
        let c = derive_config(1, 2, 2, Topology::InputXbarOutputPerLayer).unwrap();
        assert_eq!(c.trees, 1);
        assert_eq!(c.total_pes(), 1);
    }

    #[test]
    fn geometry_errors() {
        assert!(matches!(derive_config(3, 4, 32, Topology::FullXbarBoth), Err(ArchError::Geometry(_))));
        assert!(matches!(derive_config(1, 12, 32, Topology::FullXbarBoth), Err(ArchError::Geometry(_))));
        assert!(matches!(derive_config(1, 8, 24, Topology::FullXbarBoth), Err(ArchError::Geometry(_))));
        assert!(matches!(derive_config(1, 256, 32, Topology::FullXbarBoth), Err(ArchError::Geometry(_))));
    }

    #[test]
    fn pe_flat_round_trip() {
        let c = derive_config(3, 16, 16, Topology::FullXbarBoth).unwrap();
        for f in 0..c.total_pes() {
            assert_eq!(c.pe_flat(c.pe_from_flat(f)), f);
        }
    }

    #[test]
    fn per_layer_spans() {
        let c = derive_config(2, 8, 16, Topology::InputXbarOutputPerLayer).unwrap();
        let top = PeId { tree: 0, layer: 2, index: 0 };
        assert_eq!(c.writable_banks(top).iter().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let low = PeId { tree: 0, layer: 1, index: 0 };
        assert_eq!(c.writable_banks(low).iter().collect::<Vec<_>>(), vec![0, 1]);
        let f = derive_config(2, 8, 16, Topology::FullXbarBoth).unwrap();
        assert_eq!(f.writable_banks(low).len(), 8);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(64), 6);
    }
}
