use serde::{Deserialize, Serialize};

/// 2-bit PE configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeOp {
    #[default]
    Add,
    Mul,
    PassLeft,
    PassRight,
}

impl PeOp {
    pub fn code(self) -> u64 {
        self as u64
    }

    pub fn from_code(c: u64) -> Self {
        match c & 3 {
            0 => PeOp::Add,
            1 => PeOp::Mul,
            2 => PeOp::PassLeft,
            _ => PeOp::PassRight,
        }
    }

    pub fn apply(self, l: f32, r: f32) -> f32 {
        match self {
            PeOp::Add => l + r,
            PeOp::Mul => l * r,
            PeOp::PassLeft => l,
            PeOp::PassRight => r,
        }
    }
}

/// Output selector of one bank in an Exec: which PE output (if any) the
/// bank writes. `sel` is a 0-based layer under the per-layer topology
/// and a flat PE index under the full crossbar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutSel {
    pub write_en: bool,
    pub sel: u16,
}

/// Per-bank read port fields shared by Exec, Copy and Store.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReadPorts {
    pub addr: Vec<u16>,
    pub en: Vec<bool>,
    pub rst: Vec<bool>,
}

impl ReadPorts {
    pub fn idle(banks: usize) -> Self {
        ReadPorts { addr: vec![0; banks], en: vec![false; banks], rst: vec![false; banks] }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Exec {
    /// One entry per PE in flat order.
    pub pe_cfg: Vec<PeOp>,
    pub read: ReadPorts,
    /// Source bank of every tree input (global leaf index).
    pub in_route: Vec<u16>,
    pub out_sel: Vec<OutSel>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Copy {
    pub read: ReadPorts,
    /// Source bank for each destination bank.
    pub route: Vec<u16>,
    pub write_en: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Load {
    pub mem_addr: u32,
    pub mask: Vec<bool>,
}

/// Stores use the mask as the read enable of every bank.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Store {
    pub mem_addr: u32,
    pub mask: Vec<bool>,
    pub read_addr: Vec<u16>,
    pub valid_rst: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    Nop,
    Exec(Exec),
    Copy(Copy),
    Load(Load),
    Store(Store),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrKind {
    Nop,
    Exec,
    Copy,
    Load,
    Store,
}

impl InstrKind {
    pub const ALL: [InstrKind; 5] = [InstrKind::Exec, InstrKind::Copy, InstrKind::Load, InstrKind::Store, InstrKind::Nop];

    pub fn opcode(self) -> u64 {
        match self {
            InstrKind::Nop => 0,
            InstrKind::Exec => 1,
            InstrKind::Copy => 2,
            InstrKind::Load => 3,
            InstrKind::Store => 4,
        }
    }

    pub fn from_opcode(op: u64) -> Option<Self> {
        Some(match op {
            0 => InstrKind::Nop,
            1 => InstrKind::Exec,
            2 => InstrKind::Copy,
            3 => InstrKind::Load,
            4 => InstrKind::Store,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            InstrKind::Nop => "nop",
            InstrKind::Exec => "exec",
            InstrKind::Copy => "copy",
            InstrKind::Load => "load",
            InstrKind::Store => "store",
        }
    }
}

impl Instruction {
    pub fn kind(&self) -> InstrKind {
        match self {
            Instruction::Nop => InstrKind::Nop,
            Instruction::Exec(_) => InstrKind::Exec,
            Instruction::Copy(_) => InstrKind::Copy,
            Instruction::Load(_) => InstrKind::Load,
            Instruction::Store(_) => InstrKind::Store,
        }
    }
}

/// Instruction counts per category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrCounts {
    pub exec: u64,
    pub copy: u64,
    pub load: u64,
    pub store: u64,
    pub nop: u64,
}

impl InstrCounts {
    pub fn of(instrs: &[Instruction]) -> Self {
        let mut c = InstrCounts::default();
        for i in instrs {
            c.bump(i.kind());
        }
        c
    }

    pub fn bump(&mut self, k: InstrKind) {
        *self.get_mut(k) += 1;
    }

    pub fn get(&self, k: InstrKind) -> u64 {
        match k {
            InstrKind::Exec => self.exec,
            InstrKind::Copy => self.copy,
            InstrKind::Load => self.load,
            InstrKind::Store => self.store,
            InstrKind::Nop => self.nop,
        }
    }

    fn get_mut(&mut self, k: InstrKind) -> &mut u64 {
        match k {
            InstrKind::Exec => &mut self.exec,
            InstrKind::Copy => &mut self.copy,
            InstrKind::Load => &mut self.load,
            InstrKind::Store => &mut self.store,
            InstrKind::Nop => &mut self.nop,
        }
    }

    pub fn total(&self) -> u64 {
        self.exec + self.copy + self.load + self.store + self.nop
    }
}
