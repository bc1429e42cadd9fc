//! Random bounded programs run on the reference interpreter, the functional
//! stepper and the cycle-level machine must agree on registers, memory,
//! retired count and how the run ended.

mod support;

use support::{check, Stop, DIFFERENTIAL_PROGRAMS as PROGRAMS};

#[test]
fn ten_thousand_random_programs_agree() {
    let (mut halted, mut illegal, mut misaligned) = (0, 0, 0);
    for seed in 0..PROGRAMS {
        match check(seed) {
            Stop::Ecall { .. } | Stop::Ebreak { .. } => halted += 1,
            Stop::Illegal { .. } => illegal += 1,
            Stop::Misaligned { .. } => misaligned += 1,
            s => panic!("seed {seed}: {s:?}"),
        }
    }
    println!("halted {halted} illegal {illegal} misaligned {misaligned}");
    // Every ending is exercised often enough to matter.
    assert!(halted > PROGRAMS / 10, "halted {halted}");
    assert!(illegal > PROGRAMS / 10, "illegal {illegal}");
    assert!(misaligned > PROGRAMS / 100, "misaligned {misaligned}");
}

#[test]
fn oracle_expansion_matches_known_encodings() {
    // Pairs taken from an external assembler's `c.*` and expanded output.
    for (half, word) in [
        (0x4501u32, 0x0000_0513u32), // c.li a0,0 -> addi a0,zero,0
        (0x0505, 0x0015_0513),       // c.addi a0,1
        (0x8082, 0x0000_8067),       // c.jr ra (ret)
        (0x852e, 0x00b0_0533),       // c.mv a0,a1
        (0x952e, 0x00b5_0533),       // c.add a0,a1
        (0x9002, 0x0010_0073),       // c.ebreak
        (0x4108, 0x0005_2503),       // c.lw a0,0(a0)
        (0xc108, 0x00a5_2023),       // c.sw a0,0(a0)
        (0x1141, 0xff01_0113),       // c.addi sp,-16
        (0x0028, 0x0081_0513),       // c.addi4spn a0,sp,8
    ] {
        assert_eq!(support::expand(half), Some(word), "{half:#06x}");
    }
    for reserved in [0x0000u32, 0x4002, 0x8002, 0x6101 /* c.addi16sp 0 */, 0x9c21 /* c.subw */] {
        assert_eq!(support::expand(reserved), None, "{reserved:#06x}");
    }
}

/// Every compressed halfword: decoding it agrees with decoding its 32-bit
/// expansion, and both sides reject the same encodings.
#[test]
fn compressed_decode_matches_expansion_exhaustively() {
    let mut legal = 0;
    for h in (0u32..=0xFFFF).filter(|h| h & 0b11 != 0b11) {
        let ours = tmrsim::isa::decode(h);
        match support::expand(h) {
            None => assert!(ours.is_err(), "{h:#06x} accepted"),
            Some(w) => {
                let c = ours.unwrap_or_else(|e| panic!("{h:#06x}: {e}"));
                let f = tmrsim::isa::decode(w).expect("expansion decodes");
                assert_eq!((c.op, c.rd, c.rs1, c.rs2, c.imm, c.len), (f.op, f.rd, f.rs1, f.rs2, f.imm, 2), "{h:#06x}");
                legal += 1;
            }
        }
    }
    // Frozen count of accepted compressed encodings.
    assert_eq!(legal, 28_823);
}
