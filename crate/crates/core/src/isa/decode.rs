//! RV32IMC instruction decoding.
//!
//! Compressed encodings are expanded to the operation of their 32-bit
//! equivalent; [`Instruction::compressed`] keeps the original mnemonic and
//! [`Instruction::len`] the original size.

use super::{CompressedOp, Instruction, IsaError, Op};

#[inline]
fn bits(raw: u32, hi: u32, lo: u32) -> u32 {
    (raw >> lo) & ((1 << (hi - lo + 1)) - 1)
}

#[inline]
fn sign_extend(value: u32, width: u32) -> i32 {
    let shift = 32 - width;
    ((value << shift) as i32) >> shift
}

/// Length in bytes of the instruction whose low halfword is `low`.
#[inline]
pub fn instruction_length(low: u16) -> u8 {
    if low & 0b11 == 0b11 {
        4
    } else {
        2
    }
}

/// Decodes the instruction at the start of `window` (little-endian, the next
/// four bytes at pc; the upper half is ignored for compressed encodings).
pub fn decode(window: u32) -> Result<Instruction, IsaError> {
    if instruction_length(window as u16) == 2 {
        decode_compressed(window as u16)
    } else {
        decode_full(window)
    }
}

fn illegal(raw: u32) -> IsaError {
    IsaError::IllegalInstruction { raw }
}

fn decode_full(raw: u32) -> Result<Instruction, IsaError> {
    let opcode = bits(raw, 6, 0);
    let rd = bits(raw, 11, 7) as u8;
    let funct3 = bits(raw, 14, 12);
    let rs1 = bits(raw, 19, 15) as u8;
    let rs2 = bits(raw, 24, 20) as u8;
    let funct7 = bits(raw, 31, 25);

    let imm_i = sign_extend(bits(raw, 31, 20), 12);
    let imm_s = sign_extend((bits(raw, 31, 25) << 5) | bits(raw, 11, 7), 12);
    let imm_b = sign_extend(
        (bits(raw, 31, 31) << 12)
            | (bits(raw, 7, 7) << 11)
            | (bits(raw, 30, 25) << 5)
            | (bits(raw, 11, 8) << 1),
        13,
    );
    let imm_u = (raw & 0xFFFF_F000) as i32;
    let imm_j = sign_extend(
        (bits(raw, 31, 31) << 20)
            | (bits(raw, 19, 12) << 12)
            | (bits(raw, 20, 20) << 11)
            | (bits(raw, 30, 21) << 1),
        21,
    );

    let ins = |op, rd, rs1, rs2, imm| Ok(Instruction::new(op, rd, rs1, rs2, imm, raw, 4));

    match opcode {
        0b0110111 => ins(Op::Lui, rd, 0, 0, imm_u),
        0b0010111 => ins(Op::Auipc, rd, 0, 0, imm_u),
        0b1101111 => ins(Op::Jal, rd, 0, 0, imm_j),
        0b1100111 if funct3 == 0 => ins(Op::Jalr, rd, rs1, 0, imm_i),
        0b1100011 => {
            let op = match funct3 {
                0b000 => Op::Beq,
                0b001 => Op::Bne,
                0b100 => Op::Blt,
                0b101 => Op::Bge,
                0b110 => Op::Bltu,
                0b111 => Op::Bgeu,
                _ => return Err(illegal(raw)),
            };
            ins(op, 0, rs1, rs2, imm_b)
        }
        0b0000011 => {
            let op = match funct3 {
                0b000 => Op::Lb,
                0b001 => Op::Lh,
                0b010 => Op::Lw,
                0b100 => Op::Lbu,
                0b101 => Op::Lhu,
                _ => return Err(illegal(raw)),
            };
            ins(op, rd, rs1, 0, imm_i)
        }
        0b0100011 => {
            let op = match funct3 {
                0b000 => Op::Sb,
                0b001 => Op::Sh,
                0b010 => Op::Sw,
                _ => return Err(illegal(raw)),
            };
            ins(op, 0, rs1, rs2, imm_s)
        }
        0b0010011 => {
            let shamt = rs2 as i32;
            match funct3 {
                0b000 => ins(Op::Addi, rd, rs1, 0, imm_i),
                0b010 => ins(Op::Slti, rd, rs1, 0, imm_i),
                0b011 => ins(Op::Sltiu, rd, rs1, 0, imm_i),
                0b100 => ins(Op::Xori, rd, rs1, 0, imm_i),
                0b110 => ins(Op::Ori, rd, rs1, 0, imm_i),
                0b111 => ins(Op::Andi, rd, rs1, 0, imm_i),
                0b001 if funct7 == 0 => ins(Op::Slli, rd, rs1, 0, shamt),
                0b101 if funct7 == 0 => ins(Op::Srli, rd, rs1, 0, shamt),
                0b101 if funct7 == 0b0100000 => ins(Op::Srai, rd, rs1, 0, shamt),
                _ => Err(illegal(raw)),
            }
        }
        0b0110011 => {
            let op = match (funct7, funct3) {
                (0b0000000, 0b000) => Op::Add,
                (0b0100000, 0b000) => Op::Sub,
                (0b0000000, 0b001) => Op::Sll,
                (0b0000000, 0b010) => Op::Slt,
                (0b0000000, 0b011) => Op::Sltu,
                (0b0000000, 0b100) => Op::Xor,
                (0b0000000, 0b101) => Op::Srl,
                (0b0100000, 0b101) => Op::Sra,
                (0b0000000, 0b110) => Op::Or,
                (0b0000000, 0b111) => Op::And,
                (0b0000001, 0b000) => Op::Mul,
                (0b0000001, 0b001) => Op::Mulh,
                (0b0000001, 0b010) => Op::Mulhsu,
                (0b0000001, 0b011) => Op::Mulhu,
                (0b0000001, 0b100) => Op::Div,
                (0b0000001, 0b101) => Op::Divu,
                (0b0000001, 0b110) => Op::Rem,
                (0b0000001, 0b111) => Op::Remu,
                _ => return Err(illegal(raw)),
            };
            ins(op, rd, rs1, rs2, 0)
        }
        0b0001111 if funct3 == 0 || funct3 == 1 => ins(Op::Fence, 0, 0, 0, 0),
        0b1110011 => match (funct3, raw) {
            // The exit code is read from a0, so route it through rs1.
            (0, 0x0000_0073) => ins(Op::Ecall, 0, 10, 0, 0),
            (0, 0x0010_0073) => ins(Op::Ebreak, 0, 0, 0, 0),
            // Only the read-only counter CSRs, and only as pure reads
            // (csrrs/csrrc with rs1 = x0).
            (0b010 | 0b011, _) if rs1 == 0 => {
                let csr = bits(raw, 31, 20);
                if super::CounterCsr::from_address(csr).is_some() {
                    ins(Op::CsrRead, rd, 0, 0, csr as i32)
                } else {
                    Err(illegal(raw))
                }
            }
            _ => Err(illegal(raw)),
        },
        _ => Err(illegal(raw)),
    }
}

fn decode_compressed(half: u16) -> Result<Instruction, IsaError> {
    let raw = half as u32;
    if raw == 0 {
        return Err(illegal(raw));
    }
    let quadrant = raw & 0b11;
    let funct3 = bits(raw, 15, 13);
    // Register fields of the 3-bit "prime" form map to x8..x15.
    let rd_p = (bits(raw, 4, 2) + 8) as u8;
    let rs1_p = (bits(raw, 9, 7) + 8) as u8;
    let rd_full = bits(raw, 11, 7) as u8;
    let rs2_full = bits(raw, 6, 2) as u8;
    let imm6 = sign_extend((bits(raw, 12, 12) << 5) | bits(raw, 6, 2), 6);

    let c = |cop, op, rd, rs1, rs2, imm| {
        let mut i = Instruction::new(op, rd, rs1, rs2, imm, raw, 2);
        i.compressed = Some(cop);
        Ok(i)
    };

    match (quadrant, funct3) {
        (0b00, 0b000) => {
            let imm = (bits(raw, 10, 7) << 6)
                | (bits(raw, 12, 11) << 4)
                | (bits(raw, 5, 5) << 3)
                | (bits(raw, 6, 6) << 2);
            if imm == 0 {
                return Err(illegal(raw));
            }
            c(CompressedOp::Addi4spn, Op::Addi, rd_p, 2, 0, imm as i32)
        }
        (0b00, 0b010) | (0b00, 0b110) => {
            let imm = (bits(raw, 5, 5) << 6) | (bits(raw, 12, 10) << 3) | (bits(raw, 6, 6) << 2);
            if funct3 == 0b010 {
                c(CompressedOp::Lw, Op::Lw, rd_p, rs1_p, 0, imm as i32)
            } else {
                c(CompressedOp::Sw, Op::Sw, 0, rs1_p, rd_p, imm as i32)
            }
        }
        (0b01, 0b000) => {
            if rd_full == 0 {
                c(CompressedOp::Nop, Op::Addi, 0, 0, 0, imm6)
            } else {
                c(CompressedOp::Addi, Op::Addi, rd_full, rd_full, 0, imm6)
            }
        }
        (0b01, 0b001) | (0b01, 0b101) => {
            let off = (bits(raw, 12, 12) << 11)
                | (bits(raw, 8, 8) << 10)
                | (bits(raw, 10, 9) << 8)
                | (bits(raw, 6, 6) << 7)
                | (bits(raw, 7, 7) << 6)
                | (bits(raw, 2, 2) << 5)
                | (bits(raw, 11, 11) << 4)
                | (bits(raw, 5, 3) << 1);
            let off = sign_extend(off, 12);
            if funct3 == 0b001 {
                c(CompressedOp::Jal, Op::Jal, 1, 0, 0, off)
            } else {
                c(CompressedOp::J, Op::Jal, 0, 0, 0, off)
            }
        }
        (0b01, 0b010) => c(CompressedOp::Li, Op::Addi, rd_full, 0, 0, imm6),
        (0b01, 0b011) => {
            if rd_full == 2 {
                let imm = (bits(raw, 12, 12) << 9)
                    | (bits(raw, 4, 3) << 7)
                    | (bits(raw, 5, 5) << 6)
                    | (bits(raw, 2, 2) << 5)
                    | (bits(raw, 6, 6) << 4);
                let imm = sign_extend(imm, 10);
                if imm == 0 {
                    return Err(illegal(raw));
                }
                c(CompressedOp::Addi16sp, Op::Addi, 2, 2, 0, imm)
            } else {
                if imm6 == 0 {
                    return Err(illegal(raw));
                }
                c(CompressedOp::Lui, Op::Lui, rd_full, 0, 0, imm6 << 12)
            }
        }
        (0b01, 0b100) => {
            let shamt = (bits(raw, 12, 12) << 5) | bits(raw, 6, 2);
            match bits(raw, 11, 10) {
                0b00 | 0b01 if shamt >= 32 => Err(illegal(raw)),
                0b00 => c(CompressedOp::Srli, Op::Srli, rs1_p, rs1_p, 0, shamt as i32),
                0b01 => c(CompressedOp::Srai, Op::Srai, rs1_p, rs1_p, 0, shamt as i32),
                0b10 => c(CompressedOp::Andi, Op::Andi, rs1_p, rs1_p, 0, imm6),
                _ => {
                    if bits(raw, 12, 12) != 0 {
                        return Err(illegal(raw));
                    }
                    let (cop, op) = match bits(raw, 6, 5) {
                        0b00 => (CompressedOp::Sub, Op::Sub),
                        0b01 => (CompressedOp::Xor, Op::Xor),
                        0b10 => (CompressedOp::Or, Op::Or),
                        _ => (CompressedOp::And, Op::And),
                    };
                    c(cop, op, rs1_p, rs1_p, rd_p, 0)
                }
            }
        }
        (0b01, 0b110) | (0b01, 0b111) => {
            let off = (bits(raw, 12, 12) << 8)
                | (bits(raw, 6, 5) << 6)
                | (bits(raw, 2, 2) << 5)
                | (bits(raw, 11, 10) << 3)
                | (bits(raw, 4, 3) << 1);
            let off = sign_extend(off, 9);
            if funct3 == 0b110 {
                c(CompressedOp::Beqz, Op::Beq, 0, rs1_p, 0, off)
            } else {
                c(CompressedOp::Bnez, Op::Bne, 0, rs1_p, 0, off)
            }
        }
        (0b10, 0b000) => {
            if bits(raw, 12, 12) != 0 {
                return Err(illegal(raw));
            }
            c(CompressedOp::Slli, Op::Slli, rd_full, rd_full, 0, rs2_full as i32)
        }
        (0b10, 0b010) => {
            if rd_full == 0 {
                return Err(illegal(raw));
            }
            let imm = (bits(raw, 3, 2) << 6) | (bits(raw, 12, 12) << 5) | (bits(raw, 6, 4) << 2);
            c(CompressedOp::Lwsp, Op::Lw, rd_full, 2, 0, imm as i32)
        }
        (0b10, 0b100) => {
            let bit12 = bits(raw, 12, 12);
            match (bit12, rd_full, rs2_full) {
                (0, 0, 0) => Err(illegal(raw)),
                (0, rs1, 0) => c(CompressedOp::Jr, Op::Jalr, 0, rs1, 0, 0),
                (0, rd, rs2) => c(CompressedOp::Mv, Op::Add, rd, 0, rs2, 0),
                (_, 0, 0) => c(CompressedOp::Ebreak, Op::Ebreak, 0, 0, 0, 0),
                (_, rs1, 0) => c(CompressedOp::Jalr, Op::Jalr, 1, rs1, 0, 0),
                (_, rd, rs2) => c(CompressedOp::Add, Op::Add, rd, rd, rs2, 0),
            }
        }
        (0b10, 0b110) => {
            let imm = (bits(raw, 8, 7) << 6) | (bits(raw, 12, 9) << 2);
            c(CompressedOp::Swsp, Op::Sw, 0, 2, rs2_full, imm as i32)
        }
        _ => Err(illegal(raw)),
    }
}
