//! Instruction encoders and a small label-resolving assembler, used to build
//! the bundled test programs without an external toolchain.

#![allow(clippy::too_many_arguments)]

fn r_type(funct7: u32, rs2: u8, rs1: u8, funct3: u32, rd: u8, opcode: u32) -> u32 {
    (funct7 << 25) | ((rs2 as u32) << 20) | ((rs1 as u32) << 15) | (funct3 << 12) | ((rd as u32) << 7) | opcode
}

fn i_type(imm: i32, rs1: u8, funct3: u32, rd: u8, opcode: u32) -> u32 {
    debug_assert!((-2048..2048).contains(&imm), "12-bit immediate {imm}");
    (((imm as u32) & 0xFFF) << 20) | ((rs1 as u32) << 15) | (funct3 << 12) | ((rd as u32) << 7) | opcode
}

fn s_type(imm: i32, rs2: u8, rs1: u8, funct3: u32) -> u32 {
    debug_assert!((-2048..2048).contains(&imm), "12-bit immediate {imm}");
    let imm = imm as u32;
    (((imm >> 5) & 0x7F) << 25)
        | ((rs2 as u32) << 20)
        | ((rs1 as u32) << 15)
        | (funct3 << 12)
        | ((imm & 0x1F) << 7)
        | 0b0100011
}

fn b_type(offset: i32, rs2: u8, rs1: u8, funct3: u32) -> u32 {
    debug_assert!(offset % 2 == 0 && (-4096..4096).contains(&offset), "branch offset {offset}");
    let imm = offset as u32;
    (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3F) << 25)
        | ((rs2 as u32) << 20)
        | ((rs1 as u32) << 15)
        | (funct3 << 12)
        | (((imm >> 1) & 0xF) << 8)
        | (((imm >> 11) & 1) << 7)
        | 0b1100011
}

pub fn lui(rd: u8, imm20: u32) -> u32 {
    ((imm20 & 0xFFFFF) << 12) | ((rd as u32) << 7) | 0b0110111
}

pub fn auipc(rd: u8, imm20: u32) -> u32 {
    ((imm20 & 0xFFFFF) << 12) | ((rd as u32) << 7) | 0b0010111
}

pub fn jal(rd: u8, offset: i32) -> u32 {
    debug_assert!(offset % 2 == 0 && (-(1 << 20)..(1 << 20)).contains(&offset));
    let imm = offset as u32;
    (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3FF) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xFF) << 12)
        | ((rd as u32) << 7)
        | 0b1101111
}

pub fn jalr(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0, rd, 0b1100111)
}

pub fn beq(rs1: u8, rs2: u8, off: i32) -> u32 {
    b_type(off, rs2, rs1, 0b000)
}
pub fn bne(rs1: u8, rs2: u8, off: i32) -> u32 {
    b_type(off, rs2, rs1, 0b001)
}
pub fn blt(rs1: u8, rs2: u8, off: i32) -> u32 {
    b_type(off, rs2, rs1, 0b100)
}
pub fn bge(rs1: u8, rs2: u8, off: i32) -> u32 {
    b_type(off, rs2, rs1, 0b101)
}
pub fn bltu(rs1: u8, rs2: u8, off: i32) -> u32 {
    b_type(off, rs2, rs1, 0b110)
}
pub fn bgeu(rs1: u8, rs2: u8, off: i32) -> u32 {
    b_type(off, rs2, rs1, 0b111)
}

pub fn lb(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b000, rd, 0b0000011)
}
pub fn lh(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b001, rd, 0b0000011)
}
pub fn lw(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b010, rd, 0b0000011)
}
pub fn lbu(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b100, rd, 0b0000011)
}
pub fn lhu(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b101, rd, 0b0000011)
}

/// `sb rs2, imm(rs1)`; note the base register comes first.
pub fn sb(rs1: u8, rs2: u8, imm: i32) -> u32 {
    s_type(imm, rs2, rs1, 0b000)
}
pub fn sh(rs1: u8, rs2: u8, imm: i32) -> u32 {
    s_type(imm, rs2, rs1, 0b001)
}
pub fn sw(rs1: u8, rs2: u8, imm: i32) -> u32 {
    s_type(imm, rs2, rs1, 0b010)
}

pub fn addi(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b000, rd, 0b0010011)
}
pub fn slti(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b010, rd, 0b0010011)
}
pub fn sltiu(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b011, rd, 0b0010011)
}
pub fn xori(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b100, rd, 0b0010011)
}
pub fn ori(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b110, rd, 0b0010011)
}
pub fn andi(rd: u8, rs1: u8, imm: i32) -> u32 {
    i_type(imm, rs1, 0b111, rd, 0b0010011)
}
pub fn slli(rd: u8, rs1: u8, shamt: u8) -> u32 {
    r_type(0, shamt & 31, rs1, 0b001, rd, 0b0010011)
}
pub fn srli(rd: u8, rs1: u8, shamt: u8) -> u32 {
    r_type(0, shamt & 31, rs1, 0b101, rd, 0b0010011)
}
pub fn srai(rd: u8, rs1: u8, shamt: u8) -> u32 {
    r_type(0b0100000, shamt & 31, rs1, 0b101, rd, 0b0010011)
}

macro_rules! r_ops {
    ($($name:ident = ($f7:expr, $f3:expr);)*) => {
        $(pub fn $name(rd: u8, rs1: u8, rs2: u8) -> u32 {
            r_type($f7, rs2, rs1, $f3, rd, 0b0110011)
        })*
    };
}

r_ops! {
    add = (0, 0b000);
    sub = (0b0100000, 0b000);
    sll = (0, 0b001);
    slt = (0, 0b010);
    sltu = (0, 0b011);
    xor = (0, 0b100);
    srl = (0, 0b101);
    sra = (0b0100000, 0b101);
    or = (0, 0b110);
    and = (0, 0b111);
    mul = (1, 0b000);
    mulh = (1, 0b001);
    mulhsu = (1, 0b010);
    mulhu = (1, 0b011);
    div = (1, 0b100);
    divu = (1, 0b101);
    rem = (1, 0b110);
    remu = (1, 0b111);
}

pub fn fence() -> u32 {
    0x0FF0_000F
}
pub fn ecall() -> u32 {
    0x0000_0073
}
pub fn ebreak() -> u32 {
    0x0010_0073
}
pub fn rdcycle(rd: u8) -> u32 {
    (0xC00 << 20) | (0b010 << 12) | ((rd as u32) << 7) | 0b1110011
}
pub fn rdinstret(rd: u8) -> u32 {
    (0xC02 << 20) | (0b010 << 12) | ((rd as u32) << 7) | 0b1110011
}

/// Compressed encoders (16-bit). Register arguments of the "prime" forms
/// must be in x8..=x15.
pub mod c {
    fn prime(r: u8) -> u16 {
        debug_assert!((8..16).contains(&r), "compressed register x{r}");
        (r - 8) as u16
    }

    fn imm6(imm: i32) -> u16 {
        debug_assert!((-32..32).contains(&imm));
        let i = imm as u16;
        (((i >> 5) & 1) << 12) | ((i & 0x1F) << 2)
    }

    pub fn nop() -> u16 {
        0x0001
    }
    pub fn addi(rd: u8, imm: i32) -> u16 {
        imm6(imm) | ((rd as u16) << 7) | 0b01
    }
    pub fn li(rd: u8, imm: i32) -> u16 {
        (0b010 << 13) | imm6(imm) | ((rd as u16) << 7) | 0b01
    }
    pub fn lui(rd: u8, imm: i32) -> u16 {
        debug_assert!(rd != 0 && rd != 2 && imm != 0);
        (0b011 << 13) | imm6(imm) | ((rd as u16) << 7) | 0b01
    }
    pub fn addi16sp(imm: i32) -> u16 {
        debug_assert!(imm != 0 && imm % 16 == 0 && (-512..512).contains(&imm));
        let i = imm as u16;
        (0b011 << 13)
            | (((i >> 9) & 1) << 12)
            | (2 << 7)
            | (((i >> 4) & 1) << 6)
            | (((i >> 6) & 1) << 5)
            | (((i >> 7) & 3) << 3)
            | (((i >> 5) & 1) << 2)
            | 0b01
    }
    pub fn addi4spn(rd: u8, imm: u32) -> u16 {
        debug_assert!(imm != 0 && imm.is_multiple_of(4) && imm < 1024);
        let i = imm as u16;
        (((i >> 4) & 3) << 11) | (((i >> 6) & 0xF) << 7) | (((i >> 2) & 1) << 6) | (((i >> 3) & 1) << 5) | (prime(rd) << 2)
    }
    fn lw_sw_imm(imm: u32) -> u16 {
        debug_assert!(imm.is_multiple_of(4) && imm < 128);
        let i = imm as u16;
        (((i >> 3) & 7) << 10) | (((i >> 2) & 1) << 6) | (((i >> 6) & 1) << 5)
    }
    pub fn lw(rd: u8, rs1: u8, imm: u32) -> u16 {
        (0b010 << 13) | lw_sw_imm(imm) | (prime(rs1) << 7) | (prime(rd) << 2)
    }
    pub fn sw(rs1: u8, rs2: u8, imm: u32) -> u16 {
        (0b110 << 13) | lw_sw_imm(imm) | (prime(rs1) << 7) | (prime(rs2) << 2)
    }
    fn shift(funct2: u16, rd: u8, shamt: u8) -> u16 {
        (0b100 << 13) | (funct2 << 10) | (prime(rd) << 7) | (((shamt & 31) as u16) << 2) | 0b01
    }
    pub fn srli(rd: u8, shamt: u8) -> u16 {
        shift(0b00, rd, shamt)
    }
    pub fn srai(rd: u8, shamt: u8) -> u16 {
        shift(0b01, rd, shamt)
    }
    pub fn andi(rd: u8, imm: i32) -> u16 {
        (0b100 << 13) | (0b10 << 10) | imm6(imm) | (prime(rd) << 7) | 0b01
    }
    fn arith(f: u16, rd: u8, rs2: u8) -> u16 {
        (0b100011 << 10) | (prime(rd) << 7) | (f << 5) | (prime(rs2) << 2) | 0b01
    }
    pub fn sub(rd: u8, rs2: u8) -> u16 {
        arith(0b00, rd, rs2)
    }
    pub fn xor(rd: u8, rs2: u8) -> u16 {
        arith(0b01, rd, rs2)
    }
    pub fn or(rd: u8, rs2: u8) -> u16 {
        arith(0b10, rd, rs2)
    }
    pub fn and(rd: u8, rs2: u8) -> u16 {
        arith(0b11, rd, rs2)
    }
    fn jump_imm(offset: i32) -> u16 {
        debug_assert!(offset % 2 == 0 && (-2048..2048).contains(&offset));
        let i = offset as u16;
        (((i >> 11) & 1) << 12)
            | (((i >> 4) & 1) << 11)
            | (((i >> 8) & 3) << 9)
            | (((i >> 10) & 1) << 8)
            | (((i >> 6) & 1) << 7)
            | (((i >> 7) & 1) << 6)
            | (((i >> 1) & 7) << 3)
            | (((i >> 5) & 1) << 2)
    }
    pub fn j(offset: i32) -> u16 {
        (0b101 << 13) | jump_imm(offset) | 0b01
    }
    pub fn jal(offset: i32) -> u16 {
        (0b001 << 13) | jump_imm(offset) | 0b01
    }
    fn branch(f3: u16, rs1: u8, offset: i32) -> u16 {
        debug_assert!(offset % 2 == 0 && (-256..256).contains(&offset));
        let i = offset as u16;
        (f3 << 13)
            | (((i >> 8) & 1) << 12)
            | (((i >> 3) & 3) << 10)
            | (prime(rs1) << 7)
            | (((i >> 6) & 3) << 5)
            | (((i >> 1) & 3) << 3)
            | (((i >> 5) & 1) << 2)
            | 0b01
    }
    pub fn beqz(rs1: u8, offset: i32) -> u16 {
        branch(0b110, rs1, offset)
    }
    pub fn bnez(rs1: u8, offset: i32) -> u16 {
        branch(0b111, rs1, offset)
    }
    pub fn slli(rd: u8, shamt: u8) -> u16 {
        (((shamt & 31) as u16) << 2) | ((rd as u16) << 7) | 0b10
    }
    pub fn lwsp(rd: u8, imm: u32) -> u16 {
        debug_assert!(rd != 0 && imm.is_multiple_of(4) && imm < 256);
        let i = imm as u16;
        (0b010 << 13) | (((i >> 5) & 1) << 12) | ((rd as u16) << 7) | (((i >> 2) & 7) << 4) | (((i >> 6) & 3) << 2) | 0b10
    }
    pub fn swsp(rs2: u8, imm: u32) -> u16 {
        debug_assert!(imm.is_multiple_of(4) && imm < 256);
        let i = imm as u16;
        (0b110 << 13) | (((i >> 2) & 0xF) << 9) | (((i >> 6) & 3) << 7) | ((rs2 as u16) << 2) | 0b10
    }
    pub fn jr(rs1: u8) -> u16 {
        (0b100 << 13) | ((rs1 as u16) << 7) | 0b10
    }
    pub fn mv(rd: u8, rs2: u8) -> u16 {
        (0b100 << 13) | ((rd as u16) << 7) | ((rs2 as u16) << 2) | 0b10
    }
    pub fn ebreak() -> u16 {
        0x9002
    }
    pub fn jalr(rs1: u8) -> u16 {
        (0b100 << 13) | (1 << 12) | ((rs1 as u16) << 7) | 0b10
    }
    pub fn add(rd: u8, rs2: u8) -> u16 {
        (0b100 << 13) | (1 << 12) | ((rd as u16) << 7) | ((rs2 as u16) << 2) | 0b10
    }
}

enum Fixup {
    Branch { at: usize, label: String, build: fn(i32) -> u32 },
    Jal { at: usize, rd: u8, label: String },
}

/// Byte-stream assembler with forward/backward labels for branches and jumps.
#[derive(Default)]
pub struct Assembler {
    bytes: Vec<u8>,
    labels: std::collections::BTreeMap<String, usize>,
    fixups: Vec<Fixup>,
}

impl Assembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn here(&self) -> u32 {
        self.bytes.len() as u32
    }

    pub fn emit(&mut self, word: u32) -> &mut Self {
        self.bytes.extend_from_slice(&word.to_le_bytes());
        self
    }

    pub fn emit16(&mut self, half: u16) -> &mut Self {
        self.bytes.extend_from_slice(&half.to_le_bytes());
        self
    }

    pub fn emit_all(&mut self, words: &[u32]) -> &mut Self {
        for &w in words {
            self.emit(w);
        }
        self
    }

    pub fn label(&mut self, name: &str) -> &mut Self {
        let prev = self.labels.insert(name.to_string(), self.bytes.len());
        assert!(prev.is_none(), "duplicate label {name}");
        self
    }

    /// Emits a branch to `label`; `build` receives the byte offset, e.g.
    /// `|off| bne(5, 0, off)`.
    pub fn branch(&mut self, label: &str, build: fn(i32) -> u32) -> &mut Self {
        self.fixups.push(Fixup::Branch {
            at: self.bytes.len(),
            label: label.to_string(),
            build,
        });
        self.emit(0)
    }

    pub fn jal(&mut self, rd: u8, label: &str) -> &mut Self {
        self.fixups.push(Fixup::Jal {
            at: self.bytes.len(),
            rd,
            label: label.to_string(),
        });
        self.emit(0)
    }

    /// Loads an arbitrary 32-bit constant with `lui` + `addi`.
    pub fn li(&mut self, rd: u8, value: u32) -> &mut Self {
        let lo = ((value as i32) << 20) >> 20;
        let hi = value.wrapping_sub(lo as u32) >> 12;
        if hi != 0 {
            self.emit(lui(rd, hi));
            if lo != 0 {
                self.emit(addi(rd, rd, lo));
            }
        } else {
            self.emit(addi(rd, 0, lo));
        }
        self
    }

    pub fn align(&mut self, bytes: usize) -> &mut Self {
        while !self.bytes.len().is_multiple_of(bytes) {
            self.bytes.push(0);
        }
        self
    }

    pub fn finish(mut self) -> Vec<u8> {
        for fix in std::mem::take(&mut self.fixups) {
            let (at, label) = match &fix {
                Fixup::Branch { at, label, .. } | Fixup::Jal { at, label, .. } => (*at, label.clone()),
            };
            let target = *self.labels.get(&label).unwrap_or_else(|| panic!("undefined label {label}"));
            let offset = target as i32 - at as i32;
            let word = match fix {
                Fixup::Branch { build, .. } => build(offset),
                Fixup::Jal { rd, .. } => jal(rd, offset),
            };
            self.bytes[at..at + 4].copy_from_slice(&word.to_le_bytes());
        }
        self.bytes
    }
}
