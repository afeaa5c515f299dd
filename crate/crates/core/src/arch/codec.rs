//! Dense MSB-first bit packing of instruction streams.

use serde::{Deserialize, Serialize};

use super::isa::{Copy, Exec, InstrKind, Instruction, Load, OutSel, PeOp, ReadPorts, Store};
use super::{ArchConfig, ArchError, Topology};

pub const OPCODE_BITS: usize = 3;

/// A packed bit sequence; bit `i` is bit `7 - i % 8` of byte `i / 8`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bitstream {
    pub bytes: Vec<u8>,
    pub len_bits: usize,
}

impl Bitstream {
    pub fn from_bytes(bytes: Vec<u8>, len_bits: usize) -> Self {
        assert!(len_bits <= bytes.len() * 8);
        Bitstream { bytes, len_bits }
    }

    pub fn len(&self) -> usize {
        self.len_bits
    }

    pub fn is_empty(&self) -> bool {
        self.len_bits == 0
    }
}

pub struct BitWriter {
    out: Bitstream,
}

impl Default for BitWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter { out: Bitstream::default() }
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn put(&mut self, value: u64, width: usize) {
        debug_assert!(width <= 64);
        for k in (0..width).rev() {
            let bit = (value >> k) & 1;
            let pos = self.out.len_bits;
            if pos.is_multiple_of(8) {
                self.out.bytes.push(0);
            }
            if bit == 1 {
                self.out.bytes[pos / 8] |= 0x80 >> (pos % 8);
            }
            self.out.len_bits += 1;
        }
    }

    pub fn put_bool(&mut self, b: bool) {
        self.put(b as u64, 1);
    }

    pub fn finish(self) -> Bitstream {
        self.out
    }
}

pub struct BitReader<'a> {
    bits: &'a Bitstream,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a Bitstream) -> Self {
        BitReader { bits, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len_bits - self.pos
    }

    pub fn get(&mut self, width: usize) -> Result<u64, ArchError> {
        if self.remaining() < width {
            return Err(ArchError::Truncated { offset: self.pos, needed: width });
        }
        let mut v = 0u64;
        for _ in 0..width {
            let byte = self.bits.bytes[self.pos / 8];
            v = v << 1 | u64::from(byte >> (7 - self.pos % 8) & 1);
            self.pos += 1;
        }
        Ok(v)
    }

    pub fn get_bool(&mut self) -> Result<bool, ArchError> {
        Ok(self.get(1)? == 1)
    }
}

/// Encoded length of one instruction kind, opcode included.
pub fn instr_bit_length(kind: InstrKind, cfg: &ArchConfig) -> usize {
    let b = cfg.banks;
    let lr = cfg.reg_addr_bits();
    let lb = cfg.bank_bits();
    let mem = cfg.mem_addr_bits();
    OPCODE_BITS
        + match kind {
            InstrKind::Nop => 0,
            InstrKind::Exec => cfg.total_pes() * 2 + b * (lr + 2) + b * lb + b * (1 + cfg.out_sel_bits()),
            InstrKind::Copy => b * (lr + 2) + b * (lb + 1),
            InstrKind::Load => mem + b,
            InstrKind::Store => mem + b + b * lr + b,
        }
}

/// Length under a hypothetical encoding without automatic write
/// addressing: every written bank carries an explicit register address
/// instead of the reads carrying a one-bit reset.
pub fn explicit_addr_bit_length(kind: InstrKind, cfg: &ArchConfig) -> usize {
    let b = cfg.banks;
    let lr = cfg.reg_addr_bits();
    let base = instr_bit_length(kind, cfg);
    match kind {
        InstrKind::Nop => base,
        InstrKind::Exec | InstrKind::Copy => base + b * lr - b,
        InstrKind::Load => base + b * lr,
        InstrKind::Store => base - b,
    }
}

pub fn program_bits(instrs: &[Instruction], cfg: &ArchConfig) -> usize {
    instrs.iter().map(|i| instr_bit_length(i.kind(), cfg)).sum()
}

pub fn program_bits_explicit_addr(instrs: &[Instruction], cfg: &ArchConfig) -> usize {
    instrs.iter().map(|i| explicit_addr_bit_length(i.kind(), cfg)).sum()
}

fn check_len<T>(v: &[T], want: usize, what: &str) -> Result<(), ArchError> {
    if v.len() != want {
        return Err(ArchError::Encode(format!("{what} has {} entries, expected {want}", v.len())));
    }
    Ok(())
}

fn check_fits(v: u64, width: usize, what: &str) -> Result<(), ArchError> {
    if width < 64 && v >> width != 0 {
        return Err(ArchError::Encode(format!("{what} value {v} does not fit in {width} bits")));
    }
    Ok(())
}

fn put_read_ports(w: &mut BitWriter, r: &ReadPorts, cfg: &ArchConfig) -> Result<(), ArchError> {
    let b = cfg.banks;
    check_len(&r.addr, b, "read_addr")?;
    check_len(&r.en, b, "read_en")?;
    check_len(&r.rst, b, "valid_rst")?;
    for &a in &r.addr {
        check_fits(a as u64, cfg.reg_addr_bits(), "read_addr")?;
        w.put(a as u64, cfg.reg_addr_bits());
    }
    r.en.iter().for_each(|&x| w.put_bool(x));
    r.rst.iter().for_each(|&x| w.put_bool(x));
    Ok(())
}

fn get_read_ports(r: &mut BitReader, cfg: &ArchConfig) -> Result<ReadPorts, ArchError> {
    let b = cfg.banks;
    let addr = (0..b).map(|_| r.get(cfg.reg_addr_bits()).map(|v| v as u16)).collect::<Result<_, _>>()?;
    let en = (0..b).map(|_| r.get_bool()).collect::<Result<_, _>>()?;
    let rst = (0..b).map(|_| r.get_bool()).collect::<Result<_, _>>()?;
    Ok(ReadPorts { addr, en, rst })
}

fn out_sel_limit(cfg: &ArchConfig) -> usize {
    match cfg.topology {
        Topology::InputXbarOutputPerLayer => cfg.depth,
        Topology::FullXbarBoth => cfg.total_pes(),
    }
}

pub fn encode_one(w: &mut BitWriter, ins: &Instruction, cfg: &ArchConfig) -> Result<(), ArchError> {
    let b = cfg.banks;
    w.put(ins.kind().opcode(), OPCODE_BITS);
    match ins {
        Instruction::Nop => {}
        Instruction::Exec(e) => {
            check_len(&e.pe_cfg, cfg.total_pes(), "pe_cfg")?;
            check_len(&e.in_route, b, "in_route")?;
            check_len(&e.out_sel, b, "out_sel")?;
            e.pe_cfg.iter().for_each(|p| w.put(p.code(), 2));
            put_read_ports(w, &e.read, cfg)?;
            for &s in &e.in_route {
                check_fits(s as u64, cfg.bank_bits(), "in_route")?;
                w.put(s as u64, cfg.bank_bits());
            }
            for o in &e.out_sel {
                if o.sel as usize >= out_sel_limit(cfg) {
                    return Err(ArchError::Encode(format!("out_sel {} out of range", o.sel)));
                }
                w.put_bool(o.write_en);
                w.put(o.sel as u64, cfg.out_sel_bits());
            }
        }
        Instruction::Copy(c) => {
            check_len(&c.route, b, "route")?;
            check_len(&c.write_en, b, "write_en")?;
            put_read_ports(w, &c.read, cfg)?;
            for &s in &c.route {
                check_fits(s as u64, cfg.bank_bits(), "route")?;
                w.put(s as u64, cfg.bank_bits());
            }
            c.write_en.iter().for_each(|&x| w.put_bool(x));
        }
        Instruction::Load(l) => {
            check_len(&l.mask, b, "mask")?;
            if l.mem_addr as usize >= cfg.data_mem_rows() {
                return Err(ArchError::Encode(format!("memory row {} out of range", l.mem_addr)));
            }
            w.put(l.mem_addr as u64, cfg.mem_addr_bits());
            l.mask.iter().for_each(|&x| w.put_bool(x));
        }
        Instruction::Store(s) => {
            check_len(&s.mask, b, "mask")?;
            check_len(&s.read_addr, b, "read_addr")?;
            check_len(&s.valid_rst, b, "valid_rst")?;
            if s.mem_addr as usize >= cfg.data_mem_rows() {
                return Err(ArchError::Encode(format!("memory row {} out of range", s.mem_addr)));
            }
            w.put(s.mem_addr as u64, cfg.mem_addr_bits());
            s.mask.iter().for_each(|&x| w.put_bool(x));
            for &a in &s.read_addr {
                check_fits(a as u64, cfg.reg_addr_bits(), "read_addr")?;
                w.put(a as u64, cfg.reg_addr_bits());
            }
            s.valid_rst.iter().for_each(|&x| w.put_bool(x));
        }
    }
    Ok(())
}

pub fn encode(instrs: &[Instruction], cfg: &ArchConfig) -> Result<Bitstream, ArchError> {
    let mut w = BitWriter::new();
    for ins in instrs {
        encode_one(&mut w, ins, cfg)?;
    }
    Ok(w.finish())
}

pub fn decode_one(r: &mut BitReader, cfg: &ArchConfig) -> Result<Instruction, ArchError> {
    let b = cfg.banks;
    let at = r.position();
    let op = r.get(OPCODE_BITS)?;
    let kind = InstrKind::from_opcode(op).ok_or(ArchError::BadOpcode { offset: at, opcode: op as u8 })?;
    let need = instr_bit_length(kind, cfg) - OPCODE_BITS;
    if r.remaining() < need {
        return Err(ArchError::Truncated { offset: r.position(), needed: need });
    }
    Ok(match kind {
        InstrKind::Nop => Instruction::Nop,
        InstrKind::Exec => {
            let pe_cfg = (0..cfg.total_pes()).map(|_| r.get(2).map(PeOp::from_code)).collect::<Result<_, _>>()?;
            let read = get_read_ports(r, cfg)?;
            let in_route = (0..b).map(|_| r.get(cfg.bank_bits()).map(|v| v as u16)).collect::<Result<_, _>>()?;
            let mut out_sel = Vec::with_capacity(b);
            for _ in 0..b {
                let pos = r.position();
                let write_en = r.get_bool()?;
                let sel = r.get(cfg.out_sel_bits())?;
                if sel as usize >= out_sel_limit(cfg) {
                    return Err(ArchError::BadField { offset: pos, what: "out_sel" });
                }
                out_sel.push(OutSel { write_en, sel: sel as u16 });
            }
            Instruction::Exec(Exec { pe_cfg, read, in_route, out_sel })
        }
        InstrKind::Copy => {
            let read = get_read_ports(r, cfg)?;
            let route = (0..b).map(|_| r.get(cfg.bank_bits()).map(|v| v as u16)).collect::<Result<_, _>>()?;
            let write_en = (0..b).map(|_| r.get_bool()).collect::<Result<_, _>>()?;
            Instruction::Copy(Copy { read, route, write_en })
        }
        InstrKind::Load => {
            let pos = r.position();
            let mem_addr = r.get(cfg.mem_addr_bits())?;
            if mem_addr as usize >= cfg.data_mem_rows() {
                return Err(ArchError::BadField { offset: pos, what: "mem_addr" });
            }
            let mask = (0..b).map(|_| r.get_bool()).collect::<Result<_, _>>()?;
            Instruction::Load(Load { mem_addr: mem_addr as u32, mask })
        }
        InstrKind::Store => {
            let pos = r.position();
            let mem_addr = r.get(cfg.mem_addr_bits())?;
            if mem_addr as usize >= cfg.data_mem_rows() {
                return Err(ArchError::BadField { offset: pos, what: "mem_addr" });
            }
            let mask = (0..b).map(|_| r.get_bool()).collect::<Result<_, _>>()?;
            let read_addr = (0..b).map(|_| r.get(cfg.reg_addr_bits()).map(|v| v as u16)).collect::<Result<_, _>>()?;
            let valid_rst = (0..b).map(|_| r.get_bool()).collect::<Result<_, _>>()?;
            Instruction::Store(Store { mem_addr: mem_addr as u32, mask, read_addr, valid_rst })
        }
    })
}

/// Decodes a whole stream; every bit must belong to an instruction.
pub fn decode(bits: &Bitstream, cfg: &ArchConfig) -> Result<Vec<Instruction>, ArchError> {
    let mut r = BitReader::new(bits);
    let mut out = Vec::new();
    while r.remaining() > 0 {
        out.push(decode_one(&mut r, cfg)?);
    }
    Ok(out)
}
