use super::{Action, CounterCsr, Counters, Effect, HaltKind, Instruction, IsaError, MemAccess, Op};
use crate::memory::Width;

/// Computes the architectural effect of `instr` at `pc` given its source
/// operand values. Register x0 must already read as zero in `rs1`/`rs2`.
pub fn execute(instr: &Instruction, pc: u32, rs1: u32, rs2: u32, counters: Counters) -> Result<Effect, IsaError> {
    let imm = instr.imm as u32;
    let fall_through = pc.wrapping_add(instr.len as u32);
    let rd = instr.rd;
    let write = |value: u32| Action::WriteReg { rd, value };

    let mut next_pc = fall_through;
    let action = match instr.op {
        Op::Lui => write(imm),
        Op::Auipc => write(pc.wrapping_add(imm)),
        Op::Jal => {
            next_pc = pc.wrapping_add(imm);
            write(fall_through)
        }
        Op::Jalr => {
            next_pc = rs1.wrapping_add(imm) & !1;
            write(fall_through)
        }
        Op::Beq | Op::Bne | Op::Blt | Op::Bge | Op::Bltu | Op::Bgeu => {
            let taken = match instr.op {
                Op::Beq => rs1 == rs2,
                Op::Bne => rs1 != rs2,
                Op::Blt => (rs1 as i32) < (rs2 as i32),
                Op::Bge => (rs1 as i32) >= (rs2 as i32),
                Op::Bltu => rs1 < rs2,
                _ => rs1 >= rs2,
            };
            if taken {
                next_pc = pc.wrapping_add(imm);
            }
            Action::None
        }
        Op::Lb | Op::Lh | Op::Lw | Op::Lbu | Op::Lhu => {
            let (width, signed) = match instr.op {
                Op::Lb => (Width::Byte, true),
                Op::Lh => (Width::Half, true),
                Op::Lw => (Width::Word, false),
                Op::Lbu => (Width::Byte, false),
                _ => (Width::Half, false),
            };
            let addr = rs1.wrapping_add(imm);
            check_alignment(addr, width)?;
            Action::Memory(MemAccess::Load { rd, addr, width, signed })
        }
        Op::Sb | Op::Sh | Op::Sw => {
            let width = match instr.op {
                Op::Sb => Width::Byte,
                Op::Sh => Width::Half,
                _ => Width::Word,
            };
            let addr = rs1.wrapping_add(imm);
            check_alignment(addr, width)?;
            Action::Memory(MemAccess::Store {
                addr,
                width,
                data: rs2 & width.mask(),
            })
        }
        Op::Addi => write(rs1.wrapping_add(imm)),
        Op::Slti => write(((rs1 as i32) < instr.imm) as u32),
        Op::Sltiu => write((rs1 < imm) as u32),
        Op::Xori => write(rs1 ^ imm),
        Op::Ori => write(rs1 | imm),
        Op::Andi => write(rs1 & imm),
        Op::Slli => write(rs1 << (imm & 31)),
        Op::Srli => write(rs1 >> (imm & 31)),
        Op::Srai => write(((rs1 as i32) >> (imm & 31)) as u32),
        Op::Add => write(rs1.wrapping_add(rs2)),
        Op::Sub => write(rs1.wrapping_sub(rs2)),
        Op::Sll => write(rs1 << (rs2 & 31)),
        Op::Slt => write(((rs1 as i32) < (rs2 as i32)) as u32),
        Op::Sltu => write((rs1 < rs2) as u32),
        Op::Xor => write(rs1 ^ rs2),
        Op::Srl => write(rs1 >> (rs2 & 31)),
        Op::Sra => write(((rs1 as i32) >> (rs2 & 31)) as u32),
        Op::Or => write(rs1 | rs2),
        Op::And => write(rs1 & rs2),
        Op::Fence => Action::None,
        Op::Ecall => Action::Halt {
            kind: HaltKind::Ecall,
            code: rs1,
        },
        Op::Ebreak => Action::Halt {
            kind: HaltKind::Ebreak,
            code: 0,
        },
        Op::CsrRead => {
            let value = match CounterCsr::from_address(imm) {
                Some(CounterCsr::Cycle) => counters.cycle as u32,
                Some(CounterCsr::CycleH) => (counters.cycle >> 32) as u32,
                Some(CounterCsr::Instret) => counters.instret as u32,
                Some(CounterCsr::InstretH) => (counters.instret >> 32) as u32,
                None => return Err(IsaError::IllegalInstruction { raw: instr.raw }),
            };
            write(value)
        }
        Op::Mul => write(rs1.wrapping_mul(rs2)),
        Op::Mulh => write(((rs1 as i32 as i64 * rs2 as i32 as i64) >> 32) as u32),
        Op::Mulhsu => write(((rs1 as i32 as i64).wrapping_mul(rs2 as i64) >> 32) as u32),
        Op::Mulhu => write(((rs1 as u64 * rs2 as u64) >> 32) as u32),
        Op::Div => write(if rs2 == 0 {
            u32::MAX
        } else {
            (rs1 as i32).wrapping_div(rs2 as i32) as u32
        }),
        Op::Divu => write(if rs2 == 0 { u32::MAX } else { rs1 / rs2 }),
        Op::Rem => write(if rs2 == 0 {
            rs1
        } else {
            (rs1 as i32).wrapping_rem(rs2 as i32) as u32
        }),
        Op::Remu => write(if rs2 == 0 { rs1 } else { rs1 % rs2 }),
    };

    Ok(Effect {
        next_pc,
        action,
        redirect: next_pc != fall_through,
    })
}

fn check_alignment(addr: u32, width: Width) -> Result<(), IsaError> {
    if !addr.is_multiple_of(width.bytes()) {
        Err(IsaError::MisalignedAccess { addr, width })
    } else {
        Ok(())
    }
}
