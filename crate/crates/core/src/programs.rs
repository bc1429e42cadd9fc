//! Built-in programs, assembled in-process so that tests, campaigns and the
//! CLI need no cross toolchain.
//!
//! All programs start at address 0 and finish with `ecall` (exit code in a0)
//! or `ebreak`. None of them reads the SEU counters, so a corrected upset
//! never changes their architectural results.

use crate::isa::asm::*;
use crate::loader::Image;
use crate::memory::{GPIO_BASE, UART_BASE};

/// Names accepted by [`builtin`].
pub const NAMES: [&str; 7] = [
    "alu-loop",
    "test50",
    "hello",
    "uart-loopback",
    "factorial",
    "sram-walker",
    "register-loop",
];

pub fn builtin(name: &str) -> Option<Image> {
    Some(match name {
        "alu-loop" => alu_loop(),
        "test50" => test_program(),
        "hello" => hello(),
        "uart-loopback" => uart_loopback(),
        "factorial" => factorial(),
        "sram-walker" => sram_walker(),
        "register-loop" => register_loop(),
        _ => return None,
    })
}

fn image(asm: Assembler) -> Image {
    Image::raw(&asm.finish(), 0)
}

/// 200 iterations of register-only arithmetic; x2 ends at 600.
pub fn alu_loop() -> Image {
    let mut a = Assembler::new();
    a.emit(addi(1, 0, 200)).label("loop");
    a.emit(addi(2, 2, 3)).emit(xor(3, 3, 2)).emit(addi(1, 1, -1));
    a.branch("loop", |o| bne(1, 0, o));
    a.emit(ebreak());
    image(a)
}

/// Data area used by [`test_program`] and [`sram_walker`].
pub const DATA_BASE: u32 = 0x4000;

/// Exit code of [`test_program`].
pub const TEST_PROGRAM_EXIT: u32 = 22;

/// A 50-instruction program touching every functional unit: ALU, M
/// extension, byte/half/word SRAM traffic, compressed instructions, a call,
/// a counted loop, GPIO and UART. Halts after 170 cycles.
pub fn test_program() -> Image {
    let mut a = Assembler::new();
    a.emit(lui(1, DATA_BASE >> 12)); // x1 = data pointer
    a.emit(addi(2, 0, 6)); // loop counter
    a.emit(addi(3, 0, 1)); // accumulator
    a.label("loop");
    a.emit(add(3, 3, 2));
    a.emit(mul(4, 3, 2));
    a.emit(xor(5, 4, 3));
    a.emit(sw(1, 5, 0));
    a.emit(lw(6, 1, 0));
    a.emit(sh(1, 6, 4));
    a.emit(lbu(7, 1, 5));
    a.emit(lh(8, 1, 4));
    a.emit(srli(9, 6, 3));
    a.emit(sub(9, 9, 7));
    a.emit(divu(11, 4, 2));
    a.emit(remu(12, 4, 2));
    a.emit16(c::addi(1, 8));
    a.emit16(c::add(3, 12));
    a.emit(addi(2, 2, -1));
    a.branch("loop", |o| bne(2, 0, o));
    a.jal(1, "func").emit(nop_word());
    // GPIO: pins 0..7 outputs, drive the low byte of the accumulator.
    a.li(13, GPIO_BASE);
    a.emit(addi(14, 0, 0xFF));
    a.emit(sw(13, 14, 0));
    a.emit(sw(13, 3, 4));
    a.emit(lw(15, 13, 8));
    // UART: send the accumulator's low byte and a newline.
    a.li(16, UART_BASE);
    a.emit(sb(16, 15, 0));
    a.emit(addi(17, 0, b'\n' as i32));
    a.emit(sw(16, 17, 0));
    a.emit(slt(18, 9, 3)).emit(sltu(19, 3, 9)).emit(sra(20, 9, 18));
    a.emit(or(21, 20, 19)).emit(and(22, 21, 3));
    a.emit(andi(10, 3, 0xFF));
    a.emit(ecall());
    a.label("func");
    a.emit(slli(23, 3, 4));
    a.emit(mulh(24, 23, 4));
    a.emit(rem(25, 23, 2));
    a.emit(mulhu(26, 23, 3)).emit(mulhsu(27, 24, 2)).emit(div(28, 23, 2));
    a.emit(sll(29, 3, 2)).emit(srl(30, 23, 2)).emit(auipc(31, 1));
    a.emit(lb(5, 0, 0x20)).emit(sltiu(6, 3, 100)).emit(ori(7, 3, 0xF0));
    a.emit(jalr(0, 1, 0));
    image(a)
}

fn nop_word() -> u32 {
    addi(0, 0, 0)
}

/// Prints `OK\n` and exits with code 0.
pub fn hello() -> Image {
    let mut a = Assembler::new();
    a.li(1, UART_BASE);
    for &b in b"OK\n" {
        a.emit(addi(2, 0, b as i32));
        a.emit(sw(1, 2, 0));
    }
    a.emit(addi(10, 0, 0)).emit(ecall());
    image(a)
}

/// Echoes every received UART byte until it echoes a `z`, then exits 0.
/// GPIO input pin 2 is mirrored on output pin 0 while waiting.
pub fn uart_loopback() -> Image {
    let mut a = Assembler::new();
    a.li(1, UART_BASE);
    a.li(5, GPIO_BASE);
    a.emit(addi(6, 0, 1)).emit(sw(5, 6, 0)); // pin 0 output
    a.emit(addi(4, 0, b'z' as i32));
    a.label("poll");
    a.emit(lw(7, 5, 8)).emit(srli(7, 7, 2)).emit(andi(7, 7, 1)).emit(sw(5, 7, 4));
    a.emit(lw(2, 1, 4));
    a.branch("poll", |o| blt(2, 0, o)); // RX empty sets bit 31
    a.emit(sw(1, 2, 0));
    a.branch("poll", |o| bne(2, 4, o));
    a.emit(addi(10, 0, 0)).emit(ecall());
    image(a)
}

/// Computes 10! recursively over an SRAM stack and exits with it in a0
/// (3 628 800).
pub fn factorial() -> Image {
    let mut a = Assembler::new();
    a.li(2, 0x8000); // sp at top of SRAM
    a.emit(addi(10, 0, 10));
    a.jal(1, "fact");
    a.emit(ecall());
    a.label("fact");
    a.emit(addi(2, 2, -8)).emit(sw(2, 1, 4)).emit(sw(2, 10, 0));
    a.emit(addi(5, 0, 1));
    a.branch("recurse", |o| blt(5, 10, o));
    a.emit(addi(10, 0, 1)).emit(addi(2, 2, 8)).emit(jalr(0, 1, 0));
    a.label("recurse");
    a.emit(addi(10, 10, -1));
    a.jal(1, "fact");
    a.emit(lw(6, 2, 0)).emit(mul(10, 10, 6));
    a.emit(lw(1, 2, 4)).emit(addi(2, 2, 8)).emit(jalr(0, 1, 0));
    image(a)
}

/// Writes then verifies a pattern over 1024 words at [`DATA_BASE`], four
/// passes. Exits with the number of mismatches (0).
pub fn sram_walker() -> Image {
    let mut a = Assembler::new();
    a.emit(addi(20, 0, 4)); // passes
    a.emit(addi(10, 0, 0)); // mismatches
    a.label("pass");
    a.emit(lui(1, DATA_BASE >> 12)).emit(addi(2, 0, 1024)).emit(add(3, 20, 0));
    a.label("fill");
    a.emit(sw(1, 3, 0)).emit(addi(3, 3, 0x35)).emit(addi(1, 1, 4)).emit(addi(2, 2, -1));
    a.branch("fill", |o| bne(2, 0, o));
    a.emit(lui(1, DATA_BASE >> 12)).emit(addi(2, 0, 1024)).emit(add(3, 20, 0));
    a.label("check");
    a.emit(lw(4, 1, 0));
    a.branch("ok", |o| beq(4, 3, o));
    a.emit(addi(10, 10, 1));
    a.label("ok");
    a.emit(addi(3, 3, 0x35)).emit(addi(1, 1, 4)).emit(addi(2, 2, -1));
    a.branch("check", |o| bne(2, 0, o));
    a.emit(addi(20, 20, -1));
    a.branch("pass", |o| bne(20, 0, o));
    a.emit(ecall());
    image(a)
}

/// Register-only workload (multiplies, shifts and logic); exits with a
/// checksum.
pub fn register_loop() -> Image {
    let mut a = Assembler::new();
    a.emit(addi(1, 0, 2000)).emit(addi(2, 0, 7)).emit(addi(3, 0, 13));
    a.label("loop");
    a.emit(mul(4, 2, 3)).emit(add(2, 2, 4)).emit(srli(5, 2, 7)).emit(xor(3, 3, 5));
    a.emit(or(6, 3, 1)).emit(sub(2, 2, 6)).emit(addi(1, 1, -1));
    a.branch("loop", |o| bne(1, 0, o));
    a.emit(xor(10, 2, 3)).emit(ecall());
    image(a)
}
