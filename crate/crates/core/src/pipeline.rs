//! Three-stage pipeline timing model: fetch (IF), decode/execute (EX) and
//! writeback (WB).
//!
//! Every latch is a TMR cell. Timing rules:
//! - IF reads one SRAM row per cycle through the memory bridge. A 32-bit
//!   instruction starting at `pc % 4 == 2` spans two rows and needs two
//!   fetch cycles.
//! - EX executes loads and stores in a single cycle. An SRAM data access
//!   takes the bridge for that cycle and IF stalls (data has priority).
//! - Taken branches and jumps resolve in EX; the instruction fetched in the
//!   same cycle is discarded (one bubble).
//! - WB writes the register file; EX reads the WB latch through a bypass.
//! - `ecall`/`ebreak` stop fetch when executed and end the run when they
//!   reach WB.
//!
//! Consequently a halted run takes exactly
//! `retired + dmem stalls + straddle stalls + branch bubbles + 2` cycles.

use crate::isa::{
    decode, execute, instruction_length, Action, Counters, Effect, HaltKind, Instruction, MemAccess, StepError,
};
use crate::memory::{BusError, MemorySystem, Observation};
use crate::tmr::{CellId, CellStore, Domain};

/// Cycles the functional stepper charges for one instruction; the pipeline
/// adds a constant fill of [`FILL_CYCLES`] per run.
pub fn instruction_cycles(pc: u32, instr: &Instruction, effect: &Effect, sram_dmem: bool) -> u64 {
    1 + sram_dmem as u64 + effect.redirect as u64 + straddles(pc, instr.len) as u64
}

/// Pipeline fill and drain cycles of a run that ends in a halt.
pub const FILL_CYCLES: u64 = 2;

#[inline]
pub fn straddles(pc: u32, len: u8) -> bool {
    len == 4 && pc & 2 != 0
}

const HALT_NONE: u32 = 0;
const HALT_ECALL: u32 = 1;
const HALT_EBREAK: u32 = 2;
const HOLD_VALID: u32 = 1 << 16;

/// Reason EX has no instruction in a cycle. Recorded by IF one cycle ahead;
/// bookkeeping only, not machine state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bubble {
    #[default]
    Fill,
    DmemStall,
    Straddle,
    Redirect,
}

impl Bubble {
    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        [Bubble::Fill, Bubble::DmemStall, Bubble::Straddle, Bubble::Redirect]
            .get(c as usize)
            .copied()
    }
}

/// Cycle accounting of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct PipelineStats {
    pub retired: u64,
    /// Instructions that left EX (the count `rdinstret` sees).
    pub executed: u64,
    pub fill: u64,
    pub dmem_stalls: u64,
    pub straddle_stalls: u64,
    pub branch_bubbles: u64,
    /// Cycles with an SRAM data access.
    pub sram_cycles: u64,
}

impl PipelineStats {
    pub fn idle_cycles(&self) -> u64 {
        self.fill + self.dmem_stalls + self.straddle_stalls + self.branch_bubbles
    }
}

/// The instruction that reached WB this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Retired {
    pub pc: u32,
    pub rd: u8,
    pub value: u32,
    pub halt: Option<HaltKind>,
}

/// Observable result of one pipeline cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleOutcome {
    pub retired: Option<Retired>,
    /// Instruction executed in EX with its pc.
    pub executed: Option<(u32, Instruction)>,
    pub fetch_observation: Option<Observation>,
    pub data_observation: Option<Observation>,
    /// SRAM row the core wrote this cycle.
    pub core_write_row: Option<usize>,
    /// The bridge was granted to a data access; fetch stalled.
    pub dmem_grant: bool,
}

/// Cell handles of the pipeline and register file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pipeline {
    regs: [CellId; 31],
    fetch_pc: CellId,
    fetch_hold: CellId,
    ifex_valid: CellId,
    ifex_pc: CellId,
    ifex_raw: CellId,
    ifex_fault: CellId,
    exwb_valid: CellId,
    exwb_rd: CellId,
    exwb_value: CellId,
    exwb_pc: CellId,
    exwb_halt: CellId,
    pub(crate) next_bubble: Bubble,
    pub(crate) stats: PipelineStats,
}

impl Pipeline {
    /// Allocates the register file (x1..x31; x0 is hard-wired) and the
    /// pipeline latches, all reset to zero except the fetch pc.
    pub fn new(cells: &mut CellStore, entry: u32) -> Self {
        let c = Domain::Core;
        let regs = std::array::from_fn(|i| cells.alloc(format!("x{}", i + 1), c, 32, 0));
        Pipeline {
            regs,
            fetch_pc: cells.alloc("if.pc", c, 32, entry),
            fetch_hold: cells.alloc("if.hold", c, 17, 0),
            ifex_valid: cells.alloc("ifex.valid", c, 1, 0),
            ifex_pc: cells.alloc("ifex.pc", c, 32, 0),
            ifex_raw: cells.alloc("ifex.raw", c, 32, 0),
            ifex_fault: cells.alloc("ifex.fetch_fault", c, 1, 0),
            exwb_valid: cells.alloc("exwb.valid", c, 1, 0),
            exwb_rd: cells.alloc("exwb.rd", c, 5, 0),
            exwb_value: cells.alloc("exwb.value", c, 32, 0),
            exwb_pc: cells.alloc("exwb.pc", c, 32, 0),
            exwb_halt: cells.alloc("exwb.halt", c, 2, HALT_NONE),
            next_bubble: Bubble::Fill,
            stats: PipelineStats::default(),
        }
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.stats
    }

    /// Voted architectural register value.
    pub fn reg(&self, cells: &CellStore, index: u8) -> u32 {
        if index == 0 {
            0
        } else {
            cells.read(self.regs[index as usize - 1])
        }
    }

    pub fn regs(&self, cells: &CellStore) -> [u32; 32] {
        std::array::from_fn(|i| self.reg(cells, i as u8))
    }

    pub fn reg_cell(&self, index: u8) -> Option<CellId> {
        (index != 0).then(|| self.regs[index as usize - 1])
    }

    pub fn fetch_pc(&self, cells: &CellStore) -> u32 {
        cells.read(self.fetch_pc)
    }

    /// Simulates the combinational logic of one cycle and stages the next
    /// latch values. `cycle` is the current cycle number (for `rdcycle`).
    pub fn cycle(&mut self, mem: &mut MemorySystem, cycle: u64) -> Result<CycleOutcome, StepError> {
        let mut out = CycleOutcome::default();

        // WB
        let wb_valid = mem.cells.read_bool(self.exwb_valid);
        let wb_rd = mem.cells.read(self.exwb_rd) as u8;
        let wb_value = mem.cells.read(self.exwb_value);
        let wb_halt = mem.cells.read(self.exwb_halt);
        let halt = match wb_halt {
            HALT_ECALL => Some(HaltKind::Ecall),
            HALT_EBREAK => Some(HaltKind::Ebreak),
            _ => None,
        };
        if wb_valid {
            if halt.is_none() && wb_rd != 0 {
                mem.cells.stage(self.regs[wb_rd as usize - 1], wb_value);
            }
            out.retired = Some(Retired {
                pc: mem.cells.read(self.exwb_pc),
                rd: wb_rd,
                value: wb_value,
                halt,
            });
            self.stats.retired += 1;
        }

        // EX
        let mut redirect = None;
        let mut halting = wb_valid && halt.is_some();
        let mut ex_result = None;
        if mem.cells.read_bool(self.ifex_valid) {
            let pc = mem.cells.read(self.ifex_pc);
            if mem.cells.read_bool(self.ifex_fault) {
                return Err(StepError::Bus {
                    pc,
                    source: BusError::Unmapped { addr: pc },
                });
            }
            let instr = decode(mem.cells.read(self.ifex_raw)).map_err(|source| StepError::Isa { pc, source })?;
            let operand = |r: u8| {
                if r == 0 {
                    0
                } else if wb_valid && halt.is_none() && wb_rd == r {
                    wb_value
                } else {
                    mem.cells.read(self.regs[r as usize - 1])
                }
            };
            let counters = Counters {
                cycle,
                instret: self.stats.executed,
            };
            let (rs1, rs2) = (operand(instr.rs1), operand(instr.rs2));
            let effect = execute(&instr, pc, rs1, rs2, counters).map_err(|source| StepError::Isa { pc, source })?;
            let bus = |source| StepError::Bus { pc, source };
            let (rd, value, halt) = match effect.action {
                Action::None => (0, 0, HALT_NONE),
                Action::WriteReg { rd, value } => (rd, value, HALT_NONE),
                Action::Memory(MemAccess::Load { rd, addr, width, signed }) => {
                    let (raw, obs) = mem.core_read(addr, width).map_err(bus)?;
                    out.data_observation = obs;
                    out.dmem_grant = mem.is_sram(addr);
                    (rd, width.extend(raw, signed), HALT_NONE)
                }
                Action::Memory(MemAccess::Store { addr, width, data }) => {
                    out.core_write_row = mem.core_write(addr, width, data).map_err(bus)?;
                    out.dmem_grant = mem.is_sram(addr);
                    (0, 0, HALT_NONE)
                }
                Action::Halt { kind, code } => {
                    halting = true;
                    let k = match kind {
                        HaltKind::Ecall => HALT_ECALL,
                        HaltKind::Ebreak => HALT_EBREAK,
                    };
                    (0, code, k)
                }
            };
            if effect.redirect {
                redirect = Some(effect.next_pc);
            }
            ex_result = Some((pc, rd, value, halt));
            out.executed = Some((pc, instr));
            self.stats.executed += 1;
        } else {
            match self.next_bubble {
                Bubble::Fill => self.stats.fill += 1,
                Bubble::DmemStall => self.stats.dmem_stalls += 1,
                Bubble::Straddle => self.stats.straddle_stalls += 1,
                Bubble::Redirect => self.stats.branch_bubbles += 1,
            }
        }
        match ex_result {
            Some((pc, rd, value, halt)) => {
                mem.cells.stage(self.exwb_valid, 1);
                mem.cells.stage(self.exwb_rd, rd as u32);
                mem.cells.stage(self.exwb_value, value);
                mem.cells.stage(self.exwb_pc, pc);
                mem.cells.stage(self.exwb_halt, halt);
            }
            None if wb_valid => mem.cells.stage(self.exwb_valid, 0),
            None => {}
        }
        if out.dmem_grant {
            self.stats.sram_cycles += 1;
        }

        // IF
        let delivered = if halting {
            self.next_bubble = Bubble::Fill;
            None
        } else if let Some(target) = redirect {
            mem.cells.stage(self.fetch_pc, target);
            mem.cells.stage(self.fetch_hold, 0);
            self.next_bubble = Bubble::Redirect;
            None
        } else if out.dmem_grant {
            self.next_bubble = Bubble::DmemStall;
            None
        } else {
            self.fetch(mem, &mut out)
        };
        match delivered {
            Some((pc, raw, fault)) => {
                mem.cells.stage(self.ifex_valid, 1);
                mem.cells.stage(self.ifex_pc, pc);
                mem.cells.stage(self.ifex_raw, raw);
                mem.cells.stage(self.ifex_fault, fault as u32);
            }
            None if mem.cells.read_bool(self.ifex_valid) => mem.cells.stage(self.ifex_valid, 0),
            None => {}
        }
        Ok(out)
    }

    /// One fetch cycle. Returns `(pc, raw, fault)` when an instruction is
    /// complete.
    fn fetch(&mut self, mem: &mut MemorySystem, out: &mut CycleOutcome) -> Option<(u32, u32, bool)> {
        let pc = mem.cells.read(self.fetch_pc);
        let hold = mem.cells.read(self.fetch_hold);
        let row_addr = if hold & HOLD_VALID != 0 { pc.wrapping_add(2) } else { pc } & !3;
        let word = match mem.fetch_row(row_addr) {
            Ok((word, obs)) => {
                out.fetch_observation = obs;
                word
            }
            Err(_) => {
                // Reported only if the instruction reaches EX.
                self.next_bubble = Bubble::Fill;
                return Some((pc, 0, true));
            }
        };
        let (raw, len) = if hold & HOLD_VALID != 0 {
            mem.cells.stage(self.fetch_hold, 0);
            ((hold & 0xFFFF) | (word << 16), 4)
        } else if pc & 2 == 0 {
            let len = instruction_length(word as u16);
            (if len == 2 { word & 0xFFFF } else { word }, len)
        } else {
            let low = word >> 16;
            if instruction_length(low as u16) == 4 {
                mem.cells.stage(self.fetch_hold, HOLD_VALID | low);
                self.next_bubble = Bubble::Straddle;
                return None;
            }
            (low, 2)
        };
        mem.cells.stage(self.fetch_pc, pc.wrapping_add(len as u32));
        self.next_bubble = Bubble::Fill;
        Some((pc, raw, false))
    }
}
