//! Cycle-level simulator of a TMR-protected RV32IMC microcontroller.
//!
//! The machine is a three-stage RISC-V core and its peripherals, in which
//! every sequential element is triplicated with a bitwise majority voter and
//! a feedback refresh path, plus a triplicated 32 kB SRAM kept clean by an
//! autonomous scrubber. Faults are injected as single-bit upsets in any
//! replica; the kernel tracks their detection, correction latency and any
//! architectural divergence from a fault-free run.

pub mod isa;
pub mod kernel;
pub mod loader;
pub mod memory;
pub mod peripherals;
pub mod pipeline;
pub mod power;
pub mod programs;
pub mod scrubber;
pub mod seu;
pub mod snapshot;
pub mod stimulus;
pub mod tmr;
