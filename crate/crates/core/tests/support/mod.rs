//! Test-only reference model: a plain RV32IMC interpreter written straight
//! from the ISA manual, plus a generator of random bounded programs.
//!
//! The interpreter shares nothing with the simulator. Compressed
//! instructions are expanded to their 32-bit encodings first and then go
//! through the 32-bit decoder, which is a different route from the
//! simulator's direct compressed decoder.

#![allow(dead_code)]

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmrsim::isa::asm::{self, c};
use tmrsim::isa::{step_instruction, ArchState, HaltKind, IsaError, StepError};
use tmrsim::kernel::{Machine, SystemConfig, Termination};
use tmrsim::loader::{Image, Segment};
use tmrsim::memory::{BusError, SramArray, SRAM_ROWS};

/// Programs in the differential run.
pub const DIFFERENTIAL_PROGRAMS: u64 = 10_000;

pub const MEM_BYTES: usize = 0x8000;
pub const DATA_BASE: u32 = 0x4000;
pub const DATA_BYTES: usize = 0x400;

/// How a reference run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    Ecall { code: u32, pc: u32 },
    Ebreak { pc: u32 },
    Illegal { pc: u32, raw: u32 },
    Misaligned { pc: u32, addr: u32 },
    Unmapped { pc: u32, addr: u32 },
    StepLimit,
}

#[derive(Debug, Clone)]
pub struct Oracle {
    pub x: [u32; 32],
    pub pc: u32,
    pub mem: Vec<u8>,
    pub retired: u64,
}

fn sext(v: u32, bits: u32) -> u32 {
    let s = 32 - bits;
    (((v << s) as i32) >> s) as u32
}

fn field(v: u32, hi: u32, lo: u32) -> u32 {
    (v >> lo) & ((1 << (hi - lo + 1)) - 1)
}

/// 32-bit encoding of a 16-bit instruction, or `None` when the halfword is
/// reserved or belongs to an extension the core lacks (F, D).
pub fn expand(h: u32) -> Option<u32> {
    let op = h & 3;
    let f3 = field(h, 15, 13);
    let rdp = field(h, 4, 2) + 8;
    let rs1p = field(h, 9, 7) + 8;
    let rd = field(h, 11, 7);
    let rs2 = field(h, 6, 2);
    let b12 = field(h, 12, 12);
    let ci = sext((b12 << 5) | field(h, 6, 2), 6);

    let itype = |imm: u32, rs1: u32, f3: u32, rd: u32, opc: u32| ((imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc;
    let rtype = |f7: u32, rs2: u32, rs1: u32, f3: u32, rd: u32| (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | 0x33;
    let stype = |imm: u32, rs2: u32, rs1: u32| (field(imm, 11, 5) << 25) | (rs2 << 20) | (rs1 << 15) | (2 << 12) | (field(imm, 4, 0) << 7) | 0x23;
    let jtype = |off: u32, rd: u32| {
        (field(off, 20, 20) << 31) | (field(off, 10, 1) << 21) | (field(off, 11, 11) << 20) | (field(off, 19, 12) << 12) | (rd << 7) | 0x6F
    };
    let btype = |off: u32, rs1: u32, f3: u32| {
        (field(off, 12, 12) << 31)
            | (field(off, 10, 5) << 25)
            | (rs1 << 15)
            | (f3 << 12)
            | (field(off, 4, 1) << 8)
            | (field(off, 11, 11) << 7)
            | 0x63
    };

    match (op, f3) {
        (0, 0) => {
            let imm = (field(h, 10, 7) << 6) | (field(h, 12, 11) << 4) | (field(h, 5, 5) << 3) | (field(h, 6, 6) << 2);
            (imm != 0).then(|| itype(imm, 2, 0, rdp, 0x13))
        }
        (0, 2) | (0, 6) => {
            let imm = (field(h, 5, 5) << 6) | (field(h, 12, 10) << 3) | (field(h, 6, 6) << 2);
            Some(if f3 == 2 { itype(imm, rs1p, 2, rdp, 0x03) } else { stype(imm, rdp, rs1p) })
        }
        (0, _) => None,
        (1, 0) => Some(itype(ci, rd, 0, rd, 0x13)),
        (1, 1) | (1, 5) => {
            let off = (b12 << 11)
                | (field(h, 8, 8) << 10)
                | (field(h, 10, 9) << 8)
                | (field(h, 6, 6) << 7)
                | (field(h, 7, 7) << 6)
                | (field(h, 2, 2) << 5)
                | (field(h, 11, 11) << 4)
                | (field(h, 5, 3) << 1);
            Some(jtype(sext(off, 12), if f3 == 1 { 1 } else { 0 }))
        }
        (1, 2) => Some(itype(ci, 0, 0, rd, 0x13)),
        (1, 3) if rd == 2 => {
            let imm = (b12 << 9) | (field(h, 4, 3) << 7) | (field(h, 5, 5) << 6) | (field(h, 2, 2) << 5) | (field(h, 6, 6) << 4);
            (imm != 0).then(|| itype(sext(imm, 10), 2, 0, 2, 0x13))
        }
        (1, 3) => (ci != 0).then_some((ci << 12) | (rd << 7) | 0x37),
        (1, 4) => {
            let shamt = (b12 << 5) | rs2;
            match field(h, 11, 10) {
                0 | 1 if b12 == 1 => None,
                0 => Some(itype(shamt, rs1p, 5, rs1p, 0x13)),
                1 => Some(itype(0x400 | shamt, rs1p, 5, rs1p, 0x13)),
                2 => Some(itype(ci, rs1p, 7, rs1p, 0x13)),
                _ if b12 == 1 => None,
                _ => Some(match field(h, 6, 5) {
                    0 => rtype(0x20, rdp, rs1p, 0, rs1p),
                    1 => rtype(0, rdp, rs1p, 4, rs1p),
                    2 => rtype(0, rdp, rs1p, 6, rs1p),
                    _ => rtype(0, rdp, rs1p, 7, rs1p),
                }),
            }
        }
        (1, 6) | (1, 7) => {
            let off = (b12 << 8) | (field(h, 6, 5) << 6) | (field(h, 2, 2) << 5) | (field(h, 11, 10) << 3) | (field(h, 4, 3) << 1);
            Some(btype(sext(off, 9), rs1p, if f3 == 6 { 0 } else { 1 }))
        }
        (2, 0) => (b12 == 0).then(|| itype(rs2, rd, 1, rd, 0x13)),
        (2, 2) => {
            let imm = (field(h, 3, 2) << 6) | (b12 << 5) | (field(h, 6, 4) << 2);
            (rd != 0).then(|| itype(imm, 2, 2, rd, 0x03))
        }
        (2, 4) => match (b12, rd, rs2) {
            (0, 0, 0) => None,
            (0, _, 0) => Some(itype(0, rd, 0, 0, 0x67)),
            (0, _, _) => Some(rtype(0, rs2, 0, 0, rd)),
            (_, 0, 0) => Some(0x0010_0073),
            (_, _, 0) => Some(itype(0, rd, 0, 1, 0x67)),
            _ => Some(rtype(0, rs2, rd, 0, rd)),
        },
        (2, 6) => {
            let imm = (field(h, 8, 7) << 6) | (field(h, 12, 9) << 2);
            Some(stype(imm, rs2, 2))
        }
        _ => None,
    }
}

impl Oracle {
    pub fn new(image: &Image) -> Self {
        let mut mem = vec![0u8; MEM_BYTES];
        for s in &image.segments {
            mem[s.addr as usize..s.addr as usize + s.data.len()].copy_from_slice(&s.data);
        }
        Oracle { x: [0; 32], pc: image.entry, mem, retired: 0 }
    }

    fn half(&self, addr: u32) -> Option<u32> {
        let a = addr as usize;
        (a + 2 <= MEM_BYTES).then(|| u16::from_le_bytes([self.mem[a], self.mem[a + 1]]) as u32)
    }

    fn load(&self, addr: u32, n: usize) -> Option<u32> {
        let a = addr as usize;
        (a + n <= MEM_BYTES).then(|| (0..n).fold(0, |v, i| v | (self.mem[a + i] as u32) << (8 * i)))
    }

    fn store(&mut self, addr: u32, n: usize, v: u32) -> bool {
        let a = addr as usize;
        if a + n > MEM_BYTES {
            return false;
        }
        for i in 0..n {
            self.mem[a + i] = (v >> (8 * i)) as u8;
        }
        true
    }

    fn set(&mut self, rd: u32, v: u32) {
        if rd != 0 {
            self.x[rd as usize] = v;
        }
    }

    /// Runs until a stop condition or `max_steps` instructions.
    pub fn run(&mut self, max_steps: u64) -> Stop {
        for _ in 0..max_steps {
            if let Some(stop) = self.step() {
                return stop;
            }
        }
        Stop::StepLimit
    }

    /// Executes one instruction; `Some` when execution ends here.
    pub fn step(&mut self) -> Option<Stop> {
        let pc = self.pc;
        let Some(lo) = self.half(pc) else {
            return Some(Stop::Unmapped { pc, addr: pc });
        };
        let (word, len) = if lo & 3 == 3 {
            let Some(hi) = self.half(pc + 2) else {
                return Some(Stop::Unmapped { pc, addr: pc + 2 });
            };
            (lo | hi << 16, 4)
        } else {
            match expand(lo) {
                Some(w) => (w, 2),
                None => return Some(Stop::Illegal { pc, raw: lo }),
            }
        };
        let raw = if len == 2 { lo } else { word };
        let illegal = Some(Stop::Illegal { pc, raw });

        let opc = word & 0x7F;
        let rd = field(word, 11, 7);
        let f3 = field(word, 14, 12);
        let rs1 = field(word, 19, 15);
        let rs2 = field(word, 24, 20);
        let f7 = field(word, 31, 25);
        let a = self.x[rs1 as usize];
        let b = self.x[rs2 as usize];
        let imm_i = sext(word >> 20, 12);
        let imm_s = sext((f7 << 5) | rd, 12);
        let imm_b = sext((field(word, 31, 31) << 12) | (field(word, 7, 7) << 11) | (field(word, 30, 25) << 5) | (field(word, 11, 8) << 1), 13);
        let imm_j = sext((field(word, 31, 31) << 20) | (field(word, 19, 12) << 12) | (field(word, 20, 20) << 11) | (field(word, 30, 21) << 1), 21);
        let next = pc.wrapping_add(len);
        let mut new_pc = next;

        match opc {
            0x37 => self.set(rd, word & 0xFFFF_F000),
            0x17 => self.set(rd, pc.wrapping_add(word & 0xFFFF_F000)),
            0x6F => {
                self.set(rd, next);
                new_pc = pc.wrapping_add(imm_j);
            }
            0x67 if f3 == 0 => {
                new_pc = a.wrapping_add(imm_i) & !1;
                self.set(rd, next);
            }
            0x63 => {
                let taken = match f3 {
                    0 => a == b,
                    1 => a != b,
                    4 => (a as i32) < (b as i32),
                    5 => (a as i32) >= (b as i32),
                    6 => a < b,
                    7 => a >= b,
                    _ => return illegal,
                };
                if taken {
                    new_pc = pc.wrapping_add(imm_b);
                }
            }
            0x03 => {
                let (n, signed) = match f3 {
                    0 => (1, true),
                    1 => (2, true),
                    2 => (4, false),
                    4 => (1, false),
                    5 => (2, false),
                    _ => return illegal,
                };
                let addr = a.wrapping_add(imm_i);
                if !addr.is_multiple_of(n as u32) {
                    return Some(Stop::Misaligned { pc, addr });
                }
                let Some(v) = self.load(addr, n) else {
                    return Some(Stop::Unmapped { pc, addr });
                };
                self.set(rd, if signed { sext(v, 8 * n as u32) } else { v });
            }
            0x23 => {
                let n = match f3 {
                    0 => 1,
                    1 => 2,
                    2 => 4,
                    _ => return illegal,
                };
                let addr = a.wrapping_add(imm_s);
                if !addr.is_multiple_of(n as u32) {
                    return Some(Stop::Misaligned { pc, addr });
                }
                if !self.store(addr, n, b) {
                    return Some(Stop::Unmapped { pc, addr });
                }
            }
            0x13 => {
                let shamt = rs2;
                let v = match f3 {
                    0 => a.wrapping_add(imm_i),
                    2 => ((a as i32) < (imm_i as i32)) as u32,
                    3 => (a < imm_i) as u32,
                    4 => a ^ imm_i,
                    6 => a | imm_i,
                    7 => a & imm_i,
                    1 if f7 == 0 => a << shamt,
                    5 if f7 == 0 => a >> shamt,
                    5 if f7 == 0x20 => ((a as i32) >> shamt) as u32,
                    _ => return illegal,
                };
                self.set(rd, v);
            }
            0x33 => {
                let (sa, sb) = (a as i32 as i64, b as i32 as i64);
                let v = match (f7, f3) {
                    (0, 0) => a.wrapping_add(b),
                    (0x20, 0) => a.wrapping_sub(b),
                    (0, 1) => a << (b & 31),
                    (0, 2) => ((a as i32) < (b as i32)) as u32,
                    (0, 3) => (a < b) as u32,
                    (0, 4) => a ^ b,
                    (0, 5) => a >> (b & 31),
                    (0x20, 5) => ((a as i32) >> (b & 31)) as u32,
                    (0, 6) => a | b,
                    (0, 7) => a & b,
                    (1, 0) => (sa * sb) as u32,
                    (1, 1) => ((sa * sb) >> 32) as u32,
                    (1, 2) => ((sa * b as i64) >> 32) as u32,
                    (1, 3) => ((a as u64 * b as u64) >> 32) as u32,
                    (1, 4) => match b {
                        0 => u32::MAX,
                        _ if a == 0x8000_0000 && b == u32::MAX => a,
                        _ => (sa / sb) as u32,
                    },
                    (1, 5) => a.checked_div(b).unwrap_or(u32::MAX),
                    (1, 6) => match b {
                        0 => a,
                        _ if a == 0x8000_0000 && b == u32::MAX => 0,
                        _ => (sa % sb) as u32,
                    },
                    (1, 7) => a.checked_rem(b).unwrap_or(a),
                    _ => return illegal,
                };
                self.set(rd, v);
            }
            // fence and fence.i have no effect on a single in-order hart
            // without caches.
            0x0F if f3 <= 1 => {}
            0x73 => match word {
                0x0000_0073 => {
                    self.retired += 1;
                    return Some(Stop::Ecall { code: self.x[10], pc });
                }
                0x0010_0073 => {
                    self.retired += 1;
                    return Some(Stop::Ebreak { pc });
                }
                // Counter reads only (csrrs/csrrc from x0). The cycle and
                // time CSRs are timing dependent and never generated.
                _ if (f3 == 2 || f3 == 3) && rs1 == 0 => {
                    let csr = word >> 20;
                    let v = match csr {
                        0xC02 => self.retired as u32,
                        0xC82 => (self.retired >> 32) as u32,
                        0xC00 | 0xC01 | 0xC80 | 0xC81 => panic!("timing-dependent CSR {csr:#x} in a differential program"),
                        _ => return illegal,
                    };
                    self.set(rd, v);
                }
                _ => return illegal,
            },
            _ => return illegal,
        }
        self.pc = new_pc;
        self.retired += 1;
        None
    }

    /// Memory as little-endian words, the form the simulator reports.
    pub fn words(&self) -> Vec<u32> {
        self.mem.chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()
    }
}

/// Registers a random program may write. x31 holds the data pointer and is
/// never a destination.
fn dest(rng: &mut impl Rng) -> u8 {
    rng.random_range(1..31)
}

fn reg(rng: &mut impl Rng) -> u8 {
    rng.random_range(0..32)
}

/// Machine code under construction as 16-bit parcels.
#[derive(Default)]
struct Code(Vec<u16>);

impl Code {
    fn w(&mut self, word: u32) {
        self.0.push(word as u16);
        self.0.push((word >> 16) as u16);
    }
    fn h(&mut self, half: u16) {
        self.0.push(half);
    }
    fn bytes(&self) -> i32 {
        2 * self.0.len() as i32
    }
    fn append(&mut self, other: Code) {
        self.0.extend(other.0);
    }
}

const RANDOM_WORD_OPCODES: [u32; 5] = [0x13, 0x33, 0x37, 0x17, 0x0F];

/// One ALU-class 32-bit instruction with random fields. Usually legal; with
/// small probability the function fields are random too.
fn alu_word(rng: &mut impl Rng) -> u32 {
    let rd = dest(rng) as u32;
    let (rs1, rs2) = (reg(rng) as u32, reg(rng) as u32);
    match rng.random_range(0..40) {
        0..=15 => {
            let f3 = rng.random_range(0..8);
            let imm: u32 = match f3 {
                1 => rng.random_range(0..32),
                5 => rng.random_range(0..32) | if rng.random_bool(0.5) { 0x400 } else { 0 },
                _ => rng.random_range(0..4096),
            };
            (imm << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | 0x13
        }
        16..=31 => {
            let f3 = rng.random_range(0..8);
            let f7 = match rng.random_range(0..3) {
                0 => 0,
                1 => 1,
                _ if f3 == 0 || f3 == 5 => 0x20,
                _ => 0,
            };
            (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | 0x33
        }
        32..=38 => (rng.random::<u32>() & 0xFFFF_F000) | (rd << 7) | if rng.random_bool(0.5) { 0x37 } else { 0x17 },
        _ => {
            // Uniform bits under an ALU opcode: mostly illegal function
            // fields, exercising the decoders' rejection paths.
            let op = RANDOM_WORD_OPCODES[rng.random_range(0..RANDOM_WORD_OPCODES.len())];
            let w = (rng.random::<u32>() & !0x7F) | op;
            (w & !(0x1F << 7)) | (rd << 7)
        }
    }
}

/// One ALU-class compressed instruction, sometimes reserved.
fn alu_half(rng: &mut impl Rng) -> u16 {
    let rd = dest(rng);
    let prime = rng.random_range(8..16);
    let imm6 = rng.random_range(-32..32);
    match rng.random_range(0..40) {
        0 => c::addi(rd, imm6),
        1 => c::li(rd, imm6),
        2 if rd != 2 => c::lui(rd, if imm6 == 0 { 1 } else { imm6 }),
        3 => c::srli(prime, rng.random_range(0..32)),
        4 => c::srai(prime, rng.random_range(0..32)),
        5 => c::andi(prime, imm6),
        6 => [c::sub, c::xor, c::or, c::and][rng.random_range(0..4)](prime, rng.random_range(8..16)),
        7 => c::slli(rd, rng.random_range(0..32)),
        8 => c::mv(rd, rng.random_range(1..32)),
        9 => c::add(rd, rng.random_range(1..32)),
        10 => c::addi4spn(prime, 4 * rng.random_range(1..256)),
        11 => c::nop(),
        12 => c::addi16sp(16 * [-32, -1, 1, 31][rng.random_range(0..4)]),
        2 | 13..=38 => c::addi(rd, imm6),
        _ => {
            // Random bits in an ALU-only quadrant/funct3 slot, or a slot
            // that is reserved on RV32 without F/D.
            let slots: [(u16, u16); 8] = [(0, 0), (0, 1), (0, 3), (0, 4), (1, 3), (1, 4), (2, 0), (2, 5)];
            let (q, f3) = slots[rng.random_range(0..slots.len())];
            let mut h = (rng.random::<u16>() & 0x1FFC) | (f3 << 13) | q;
            if (h >> 7) & 0x1F == 31 {
                h &= !(1 << 7);
            }
            h
        }
    }
}

/// ALU-only block used as a branch or jump shadow.
fn block(rng: &mut impl Rng) -> Code {
    let mut code = Code::default();
    for _ in 0..rng.random_range(0..4) {
        if rng.random_bool(0.3) {
            code.h(alu_half(rng));
        } else {
            code.w(alu_word(rng));
        }
    }
    code
}

fn branch_word(f3: u32, rs1: u8, rs2: u8, off: i32) -> u32 {
    match f3 {
        0 => asm::beq(rs1, rs2, off),
        1 => asm::bne(rs1, rs2, off),
        4 => asm::blt(rs1, rs2, off),
        5 => asm::bge(rs1, rs2, off),
        6 => asm::bltu(rs1, rs2, off),
        _ => asm::bgeu(rs1, rs2, off),
    }
}

/// A random program of roughly `len` items that can only move forward, so
/// it stops within a bounded number of steps. Data accesses go through x31,
/// which points at a randomly filled data area.
pub fn random_program(seed: u64, len: usize) -> Image {
    random_program_with(seed, len, false)
}

/// As [`random_program`], optionally also reading the cycle counter (which
/// the reference interpreter does not model).
pub fn random_program_with(seed: u64, len: usize, cycle_reads: bool) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut code = Code::default();
    code.w(asm::lui(31, DATA_BASE >> 12));
    for r in 1..rng.random_range(4..12) {
        code.w(asm::lui(r, rng.random::<u32>() >> 12));
        code.w(asm::addi(r, r, rng.random_range(-2048..2048)));
    }
    for _ in 0..len {
        match rng.random_range(0..100) {
            0..=39 => code.w(alu_word(&mut rng)),
            40..=54 => code.h(alu_half(&mut rng)),
            55..=69 => {
                let misalign = rng.random_bool(0.03);
                let (f3, n) = [(0, 1), (1, 2), (2, 4), (4, 1), (5, 2)][rng.random_range(0..5)];
                let mut off = rng.random_range(-64..DATA_BYTES as i32 / 4 * 4) & !(n - 1);
                if misalign && n > 1 {
                    off |= 1;
                }
                if rng.random_bool(0.5) {
                    let w = match f3 {
                        0 => asm::lb(dest(&mut rng), 31, off),
                        1 => asm::lh(dest(&mut rng), 31, off),
                        2 => asm::lw(dest(&mut rng), 31, off),
                        4 => asm::lbu(dest(&mut rng), 31, off),
                        _ => asm::lhu(dest(&mut rng), 31, off),
                    };
                    code.w(w);
                } else {
                    let src = reg(&mut rng);
                    let w = match n {
                        1 => asm::sb(31, src, off),
                        2 => asm::sh(31, src, off),
                        _ => asm::sw(31, src, off),
                    };
                    code.w(w);
                }
            }
            70..=72 => {
                // Compressed load/store through a prime register.
                let base = rng.random_range(8..16);
                code.w(asm::addi(base, 31, 4 * rng.random_range(0..200)));
                let imm = 4 * rng.random_range(0..32);
                if rng.random_bool(0.5) {
                    code.h(c::lw(rng.random_range(8..16), base, imm));
                } else {
                    code.h(c::sw(base, rng.random_range(8..16), imm));
                }
            }
            73..=80 => {
                let shadow = block(&mut rng);
                let f3 = [0, 1, 4, 5, 6, 7][rng.random_range(0..6)];
                code.w(branch_word(f3, reg(&mut rng), reg(&mut rng), 4 + shadow.bytes()));
                code.append(shadow);
            }
            81..=83 => {
                let shadow = block(&mut rng);
                let rs = rng.random_range(8..16);
                let off = 2 + shadow.bytes();
                code.h(if rng.random_bool(0.5) { c::beqz(rs, off) } else { c::bnez(rs, off) });
                code.append(shadow);
            }
            84..=86 => {
                let shadow = block(&mut rng);
                code.w(asm::jal(dest(&mut rng), 4 + shadow.bytes()));
                code.append(shadow);
            }
            87..=88 => {
                let shadow = block(&mut rng);
                let off = 2 + shadow.bytes();
                code.h(if rng.random_bool(0.5) { c::j(off) } else { c::jal(off) });
                code.append(shadow);
            }
            89..=91 => {
                // auipc + jalr, landing just past the shadow.
                let shadow = block(&mut rng);
                let t = dest(&mut rng);
                code.w(asm::auipc(t, 0));
                code.w(asm::jalr(dest(&mut rng), t, 8 + shadow.bytes()));
                code.append(shadow);
            }
            92..=93 => {
                let shadow = block(&mut rng);
                let t = dest(&mut rng);
                code.w(asm::auipc(t, 0));
                code.w(asm::addi(t, t, 10 + shadow.bytes()));
                code.h(if rng.random_bool(0.5) { c::jr(t) } else { c::jalr(t) });
                code.append(shadow);
            }
            94..=96 if cycle_reads && rng.random_bool(0.5) => {
                let rd = dest(&mut rng);
                code.w(if rng.random_bool(0.8) { asm::rdcycle(rd) } else { (0xC80 << 20) | (2 << 12) | ((rd as u32) << 7) | 0x73 });
            }
            94..=96 => code.w(asm::rdinstret(dest(&mut rng))),
            97..=98 => code.w(asm::fence()),
            _ => code.w(rng.next_u32() & !0x7F | 0x0F),
        }
    }
    code.w(asm::addi(10, reg(&mut rng), 0));
    code.w(asm::ecall());

    let bytes: Vec<u8> = code.0.iter().flat_map(|h| h.to_le_bytes()).collect();
    assert!(bytes.len() < DATA_BASE as usize - 64, "program overlaps the data area");
    let mut data = vec![0u8; DATA_BYTES];
    rng.fill_bytes(&mut data);
    let mut image = Image::raw(&bytes, 0);
    image.segments.push(Segment { addr: DATA_BASE, data });
    image
}

pub fn stop_of(result: Result<(HaltKind, u32, u32), StepError>) -> Stop {
    match result {
        Ok((HaltKind::Ecall, code, pc)) => Stop::Ecall { code, pc },
        Ok((HaltKind::Ebreak, _, pc)) => Stop::Ebreak { pc },
        Err(StepError::Isa { pc, source: IsaError::IllegalInstruction { raw } }) => Stop::Illegal { pc, raw },
        Err(StepError::Isa { pc, source: IsaError::MisalignedAccess { addr, .. } }) => Stop::Misaligned { pc, addr },
        Err(StepError::Bus { pc, source: BusError::Unmapped { addr } }) => Stop::Unmapped { pc, addr },
        Err(e) => panic!("unexpected stop {e}"),
    }
}

/// Outcome of one program on all three models; panics on any mismatch.
pub fn check(seed: u64) -> Stop {
    let image = random_program(seed, 24 + (seed % 64) as usize);

    let mut oracle = Oracle::new(&image);
    let expected = oracle.run(100_000);
    assert_ne!(expected, Stop::StepLimit, "seed {seed}: forward-only program did not stop");

    // Functional stepper over a bare SRAM array.
    let mut sram = SramArray::new(SRAM_ROWS);
    for s in &image.segments {
        sram.load_bytes(s.addr, &s.data).unwrap();
    }
    let mut state = ArchState::new(image.entry);
    let stepped = loop {
        let pc = state.pc;
        match step_instruction(&mut state, &mut sram) {
            Ok(_) => {
                if let Some((kind, code)) = state.halted {
                    break stop_of(Ok((kind, code, pc)));
                }
            }
            Err(e) => break stop_of(Err(e)),
        }
    };
    assert_eq!(stepped, expected, "seed {seed}: stepper stop");
    assert_eq!(state.regs(), oracle.x, "seed {seed}: stepper registers");
    assert_eq!(state.instret, oracle.retired, "seed {seed}: stepper retired");
    assert!(sram.voted_image() == oracle.words(), "seed {seed}: stepper memory");

    let config = SystemConfig {
        max_cycles: 1_000_000,
        ..SystemConfig::default()
    };
    let mut m = Machine::new(config, &image).unwrap();
    let machine_stop = match m.run() {
        Termination::Halted { kind, code, pc } => stop_of(Ok((kind, code, pc))),
        Termination::Fault(e) => stop_of(Err(e)),
        Termination::CycleLimit => Stop::StepLimit,
    };
    assert_eq!(machine_stop, expected, "seed {seed}: machine stop");
    let view = m.arch_view();
    assert_eq!(view.regs, oracle.x, "seed {seed}: machine registers");
    assert_eq!(view.retired, oracle.retired, "seed {seed}: machine retired");
    assert!(view.sram == oracle.words(), "seed {seed}: machine memory");
    assert!(m.sram().dirty_rows().is_empty());
    assert_eq!(m.seu_counters(), [0; 3]);
    expected
}
