use rand::Rng;

use super::{ArchConfig, Copy, Exec, Instruction, Load, OutSel, PeOp, ReadPorts, Store, Topology};

fn read_ports<R: Rng + ?Sized>(rng: &mut R, cfg: &ArchConfig) -> ReadPorts {
    let b = cfg.banks;
    ReadPorts {
        addr: (0..b).map(|_| rng.gen_range(0..cfg.regs_per_bank) as u16).collect(),
        en: (0..b).map(|_| rng.gen()).collect(),
        rst: (0..b).map(|_| rng.gen()).collect(),
    }
}

/// Uniformly random, encodable instruction for `cfg` (every field in
/// range, no semantic validity implied).
pub fn random_instruction<R: Rng + ?Sized>(rng: &mut R, cfg: &ArchConfig) -> Instruction {
    let b = cfg.banks;
    let rows = cfg.data_mem_rows() as u32;
    let bank = |rng: &mut R| rng.gen_range(0..b) as u16;
    match rng.gen_range(0..5) {
        0 => Instruction::Nop,
        1 => {
            let sel_limit = match cfg.topology {
                Topology::InputXbarOutputPerLayer => cfg.depth,
                Topology::FullXbarBoth => cfg.total_pes(),
            };
            Instruction::Exec(Exec {
                pe_cfg: (0..cfg.total_pes()).map(|_| PeOp::from_code(rng.gen_range(0..4))).collect(),
                read: read_ports(rng, cfg),
                in_route: (0..b).map(|_| bank(rng)).collect(),
                out_sel: (0..b).map(|_| OutSel { write_en: rng.gen(), sel: rng.gen_range(0..sel_limit) as u16 }).collect(),
            })
        }
        2 => Instruction::Copy(Copy {
            read: read_ports(rng, cfg),
            route: (0..b).map(|_| bank(rng)).collect(),
            write_en: (0..b).map(|_| rng.gen()).collect(),
        }),
        3 => Instruction::Load(Load { mem_addr: rng.gen_range(0..rows), mask: (0..b).map(|_| rng.gen()).collect() }),
        _ => {
            let p = read_ports(rng, cfg);
            Instruction::Store(Store { mem_addr: rng.gen_range(0..rows), mask: p.en, read_addr: p.addr, valid_rst: p.rst })
        }
    }
}

pub fn random_stream<R: Rng + ?Sized>(rng: &mut R, cfg: &ArchConfig, len: usize) -> Vec<Instruction> {
    (0..len).map(|_| random_instruction(rng, cfg)).collect()
}
