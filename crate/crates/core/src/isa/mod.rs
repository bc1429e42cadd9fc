//! RV32IMC decode and execute semantics.
//!
//! The executor is a pure function of the decoded instruction, its pc and
//! the (voted) source operand values; both the functional stepper in this
//! module and the cycle-level pipeline use it, so timing can never change
//! architectural results.

pub mod asm;
mod decode;
mod exec;

pub use decode::{decode, instruction_length};
pub use exec::execute;

use crate::memory::{Bus, BusError, Width};
use crate::tmr::{Domain, ElementId, TmrCell};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("illegal instruction {raw:#010x}")]
    IllegalInstruction { raw: u32 },
    #[error("misaligned {width:?} access at {addr:#010x}")]
    MisalignedAccess { addr: u32, width: Width },
}

/// Semantic operation. Compressed instructions decode to the operation of
/// their 32-bit expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Fence,
    Ecall,
    Ebreak,
    /// Read of a user counter CSR (`rdcycle` and friends); `imm` holds the
    /// CSR address.
    CsrRead,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
}

impl Op {
    pub fn mnemonic(self) -> &'static str {
        use Op::*;
        match self {
            Lui => "lui",
            Auipc => "auipc",
            Jal => "jal",
            Jalr => "jalr",
            Beq => "beq",
            Bne => "bne",
            Blt => "blt",
            Bge => "bge",
            Bltu => "bltu",
            Bgeu => "bgeu",
            Lb => "lb",
            Lh => "lh",
            Lw => "lw",
            Lbu => "lbu",
            Lhu => "lhu",
            Sb => "sb",
            Sh => "sh",
            Sw => "sw",
            Addi => "addi",
            Slti => "slti",
            Sltiu => "sltiu",
            Xori => "xori",
            Ori => "ori",
            Andi => "andi",
            Slli => "slli",
            Srli => "srli",
            Srai => "srai",
            Add => "add",
            Sub => "sub",
            Sll => "sll",
            Slt => "slt",
            Sltu => "sltu",
            Xor => "xor",
            Srl => "srl",
            Sra => "sra",
            Or => "or",
            And => "and",
            Fence => "fence",
            Ecall => "ecall",
            Ebreak => "ebreak",
            CsrRead => "csrr",
            Mul => "mul",
            Mulh => "mulh",
            Mulhsu => "mulhsu",
            Mulhu => "mulhu",
            Div => "div",
            Divu => "divu",
            Rem => "rem",
            Remu => "remu",
        }
    }

    pub fn is_load(self) -> bool {
        matches!(self, Op::Lb | Op::Lh | Op::Lw | Op::Lbu | Op::Lhu)
    }

    pub fn is_store(self) -> bool {
        matches!(self, Op::Sb | Op::Sh | Op::Sw)
    }
}

/// Original mnemonic of a compressed encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompressedOp {
    Addi4spn,
    Lw,
    Sw,
    Nop,
    Addi,
    Jal,
    Li,
    Addi16sp,
    Lui,
    Srli,
    Srai,
    Andi,
    Sub,
    Xor,
    Or,
    And,
    J,
    Beqz,
    Bnez,
    Slli,
    Lwsp,
    Jr,
    Mv,
    Ebreak,
    Jalr,
    Add,
    Swsp,
}

impl CompressedOp {
    pub fn mnemonic(self) -> &'static str {
        use CompressedOp::*;
        match self {
            Addi4spn => "c.addi4spn",
            Lw => "c.lw",
            Sw => "c.sw",
            Nop => "c.nop",
            Addi => "c.addi",
            Jal => "c.jal",
            Li => "c.li",
            Addi16sp => "c.addi16sp",
            Lui => "c.lui",
            Srli => "c.srli",
            Srai => "c.srai",
            Andi => "c.andi",
            Sub => "c.sub",
            Xor => "c.xor",
            Or => "c.or",
            And => "c.and",
            J => "c.j",
            Beqz => "c.beqz",
            Bnez => "c.bnez",
            Slli => "c.slli",
            Lwsp => "c.lwsp",
            Jr => "c.jr",
            Mv => "c.mv",
            Ebreak => "c.ebreak",
            Jalr => "c.jalr",
            Add => "c.add",
            Swsp => "c.swsp",
        }
    }
}

/// User-level counter CSRs readable with `csrrs rd, csr, x0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterCsr {
    Cycle,
    CycleH,
    Instret,
    InstretH,
}

impl CounterCsr {
    pub fn from_address(csr: u32) -> Option<Self> {
        match csr {
            0xC00 | 0xC01 => Some(CounterCsr::Cycle),
            0xC80 | 0xC81 => Some(CounterCsr::CycleH),
            0xC02 => Some(CounterCsr::Instret),
            0xC82 => Some(CounterCsr::InstretH),
            _ => None,
        }
    }
}

/// A decoded instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
    /// Original encoding (16 significant bits for compressed forms).
    pub raw: u32,
    /// 2 or 4.
    pub len: u8,
    pub compressed: Option<CompressedOp>,
}

impl Instruction {
    pub(crate) fn new(op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32, raw: u32, len: u8) -> Self {
        Instruction {
            op,
            rd,
            rs1,
            rs2,
            imm,
            raw,
            len,
            compressed: None,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Op::*;
        let name = self.compressed.map(|c| c.mnemonic()).unwrap_or(self.op.mnemonic());
        let (rd, rs1, rs2, imm) = (self.rd, self.rs1, self.rs2, self.imm);
        match self.op {
            Lui | Auipc => write!(f, "{name} x{rd}, {:#x}", (imm as u32) >> 12),
            Jal => write!(f, "{name} x{rd}, {imm}"),
            Jalr => write!(f, "{name} x{rd}, {imm}(x{rs1})"),
            Beq | Bne | Blt | Bge | Bltu | Bgeu => write!(f, "{name} x{rs1}, x{rs2}, {imm}"),
            Lb | Lh | Lw | Lbu | Lhu => write!(f, "{name} x{rd}, {imm}(x{rs1})"),
            Sb | Sh | Sw => write!(f, "{name} x{rs2}, {imm}(x{rs1})"),
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => {
                write!(f, "{name} x{rd}, x{rs1}, {imm}")
            }
            Fence | Ecall | Ebreak => f.write_str(name),
            CsrRead => write!(f, "{name} x{rd}, {:#x}", imm),
            _ => write!(f, "{name} x{rd}, x{rs1}, x{rs2}"),
        }
    }
}

/// Why execution stopped at an `ecall`/`ebreak`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HaltKind {
    Ecall,
    Ebreak,
}

/// Data-side access requested by an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemAccess {
    Load { rd: u8, addr: u32, width: Width, signed: bool },
    Store { addr: u32, width: Width, data: u32 },
}

/// What the executed instruction does besides updating the pc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    None,
    WriteReg { rd: u8, value: u32 },
    Memory(MemAccess),
    /// Stop the simulation. `code` carries a0 for `ecall`, 0 for `ebreak`.
    Halt { kind: HaltKind, code: u32 },
}

/// Architectural effect of one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Effect {
    pub next_pc: u32,
    pub action: Action,
    /// The next pc is not the fall-through address.
    pub redirect: bool,
}

/// Counter values visible to `rdcycle`/`rdinstret`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub cycle: u64,
    pub instret: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("at pc {pc:#010x}: {source}")]
    Isa { pc: u32, source: IsaError },
    #[error("at pc {pc:#010x}: {source}")]
    Bus { pc: u32, source: BusError },
}

/// Architectural state for the functional (untimed) stepper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchState {
    pub pc: u32,
    regs: Vec<TmrCell>,
    pub cycle: u64,
    pub instret: u64,
    pub halted: Option<(HaltKind, u32)>,
}

impl Default for ArchState {
    fn default() -> Self {
        Self::new(0)
    }
}

impl ArchState {
    pub fn new(pc: u32) -> Self {
        let regs = (0..32)
            .map(|i| TmrCell::new(ElementId(i), Domain::Core, 32).expect("32-bit register"))
            .collect();
        ArchState {
            pc,
            regs,
            cycle: 0,
            instret: 0,
            halted: None,
        }
    }

    /// Voted register value; x0 always reads zero.
    pub fn reg(&self, index: u8) -> u32 {
        if index == 0 {
            0
        } else {
            self.regs[index as usize].vote().value
        }
    }

    /// Writes a register; writes to x0 are discarded.
    pub fn set_reg(&mut self, index: u8, value: u32) {
        if index != 0 {
            self.regs[index as usize].write(value).expect("32-bit register");
        }
    }

    pub fn regs(&self) -> [u32; 32] {
        std::array::from_fn(|i| self.reg(i as u8))
    }

    pub fn reg_cell_mut(&mut self, index: u8) -> &mut TmrCell {
        &mut self.regs[index as usize]
    }
}

/// Fetches, decodes and executes exactly one instruction, advancing the
/// cycle count by the pipeline's cost for it.
pub fn step_instruction(state: &mut ArchState, bus: &mut impl Bus) -> Result<Instruction, StepError> {
    let pc = state.pc;
    let window = bus.fetch(pc).map_err(|source| StepError::Bus { pc, source })?;
    let instr = decode(window).map_err(|source| StepError::Isa { pc, source })?;
    // The pipeline executes this instruction in cycle
    // `state.cycle + 1 (+1 if it straddles two rows)`.
    let counters = Counters {
        cycle: state.cycle + 1 + crate::pipeline::straddles(pc, instr.len) as u64,
        instret: state.instret,
    };
    let effect = execute(&instr, pc, state.reg(instr.rs1), state.reg(instr.rs2), counters)
        .map_err(|source| StepError::Isa { pc, source })?;
    let mut sram_access = false;
    match effect.action {
        Action::None => {}
        Action::WriteReg { rd, value } => state.set_reg(rd, value),
        Action::Memory(MemAccess::Load { rd, addr, width, signed }) => {
            let value = bus.load(addr, width).map_err(|source| StepError::Bus { pc, source })?;
            state.set_reg(rd, width.extend(value, signed));
            sram_access = bus.is_sram(addr);
        }
        Action::Memory(MemAccess::Store { addr, width, data }) => {
            bus.store(addr, width, data).map_err(|source| StepError::Bus { pc, source })?;
            sram_access = bus.is_sram(addr);
        }
        Action::Halt { kind, code } => state.halted = Some((kind, code)),
    }
    state.cycle += crate::pipeline::instruction_cycles(pc, &instr, &effect, sram_access);
    state.instret += 1;
    state.pc = effect.next_pc;
    Ok(instr)
}

#[cfg(test)]
mod tests {
    use super::asm::*;
    use super::*;
    use crate::memory::SramArray;

    fn run(program: &[u32], steps: usize) -> (ArchState, SramArray) {
        let mut sram = SramArray::new(crate::memory::SRAM_ROWS);
        let bytes: Vec<u8> = program.iter().flat_map(|w| w.to_le_bytes()).collect();
        sram.load_bytes(0, &bytes).unwrap();
        let mut state = ArchState::new(0);
        for _ in 0..steps {
            if state.halted.is_some() {
                break;
            }
            step_instruction(&mut state, &mut sram).unwrap();
        }
        (state, sram)
    }

    #[test]
    fn addi_from_zero() {
        let (s, _) = run(&[addi(1, 0, 1)], 1);
        assert_eq!(s.reg(1), 1);
        assert_eq!(s.pc, 4);
    }

    #[test]
    fn div_by_zero_and_overflow() {
        let (s, _) = run(
            &[addi(1, 0, 7), div(2, 1, 0), lui(3, 0x80000), addi(4, 0, -1), div(5, 3, 4), rem(6, 3, 4), remu(7, 1, 0)],
            7,
        );
        assert_eq!(s.reg(2), 0xFFFF_FFFF);
        assert_eq!(s.reg(5), 0x8000_0000);
        assert_eq!(s.reg(6), 0);
        assert_eq!(s.reg(7), 7);
    }

    #[test]
    fn mul_low_word() {
        let (s, _) = run(&[addi(1, 0, 7), addi(2, 0, 6), mul(3, 1, 2)], 3);
        assert_eq!(s.reg(3), 42);
    }

    #[test]
    fn ten_addis() {
        let prog: Vec<u32> = std::iter::repeat_n(addi(5, 5, 1), 10).chain([ebreak()]).collect();
        let (s, _) = run(&prog, 100);
        assert_eq!(s.reg(5), 10);
        assert_eq!(s.instret, 11);
        assert_eq!(s.halted, Some((HaltKind::Ebreak, 0)));
    }

    #[test]
    fn store_load_round_trip() {
        let (s, sram) = run(
            &[lui(1, 0x4), addi(2, 0, -123), sw(1, 2, 8), lw(3, 1, 8), lbu(4, 1, 8), lb(5, 1, 8)],
            6,
        );
        assert_eq!(s.reg(3), (-123i32) as u32);
        assert_eq!(s.reg(4), 0x85);
        assert_eq!(s.reg(5), 0xFFFF_FF85);
        assert_eq!(sram.read_voted(0x4008 / 4).value, (-123i32) as u32);
    }

    #[test]
    fn factorial_of_ten() {
        // x1 = n, x2 = acc; loop: acc *= n; n -= 1; bnez n loop
        let prog = [
            addi(1, 0, 10),
            addi(2, 0, 1),
            mul(2, 2, 1),
            addi(1, 1, -1),
            bne(1, 0, -8),
            ebreak(),
        ];
        let (s, _) = run(&prog, 1000);
        assert_eq!(s.reg(2), 3_628_800);
    }

    #[test]
    fn misaligned_access_faults() {
        let mut sram = SramArray::new(crate::memory::SRAM_ROWS);
        let bytes: Vec<u8> = [addi(1, 0, 2), lw(2, 1, 0)].iter().flat_map(|w| w.to_le_bytes()).collect();
        sram.load_bytes(0, &bytes).unwrap();
        let mut s = ArchState::new(0);
        step_instruction(&mut s, &mut sram).unwrap();
        assert_eq!(
            step_instruction(&mut s, &mut sram),
            Err(StepError::Isa { pc: 4, source: IsaError::MisalignedAccess { addr: 2, width: Width::Word } })
        );
    }

    #[test]
    fn x0_writes_discarded() {
        let (s, _) = run(&[addi(0, 0, 5), lui(0, 0x12345)], 2);
        assert_eq!(s.reg(0), 0);
    }

    #[test]
    fn fetch_outside_sram_is_bus_fault() {
        let (mut s, mut sram) = run(&[jal(0, 0x7FFC)], 1);
        assert_eq!(s.pc, 0x7FFC);
        s.pc = 0x8000;
        assert!(matches!(step_instruction(&mut s, &mut sram), Err(StepError::Bus { pc: 0x8000, .. })));
    }
}
