//! Autonomous SRAM self-refresh.
//!
//! A two-phase state machine walks the rows through the scrubber port. In
//! the read phase it compares the three raw replicas of the current row;
//! equal rows are passed over, a mismatch latches the voted word and moves
//! to the write-back phase. The write-back phase writes the latched word to
//! all replicas, unless the core is writing the same row in that cycle, in
//! which case the core data wins and the write is dropped. The pointer
//! advances after every clean read and every write-back phase.
//!
//! The scrubber's own state lives in TMR cells of the SRAM domain.

use crate::memory::SramArray;
use crate::tmr::{majority_vote, CellId, CellStore, Domain};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScrubberConfig {
    pub enabled: bool,
    /// The state machine steps once every `divider` cycles.
    pub divider: u32,
}

impl Default for ScrubberConfig {
    fn default() -> Self {
        ScrubberConfig {
            enabled: true,
            divider: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScrubPhase {
    Read,
    WriteBack,
}

/// What one scrubber step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScrubAction {
    /// Disabled, or not a step cycle of the divider.
    Idle,
    CleanRead { row: usize },
    /// Replicas disagreed; `first_observation` is false if the row's
    /// discrepancy was already counted (e.g. by a core read).
    Mismatch { row: usize, voted: u32, first_observation: bool },
    WriteBack { row: usize, word: u32 },
    /// Write-back dropped because the core wrote the row this cycle.
    Skipped { row: usize },
}

/// Single-upset worst case in scrubber steps: the upset lands just behind
/// the pointer and waits one full pass, then one write-back cycle.
pub fn worst_case_correction_cycles(rows: usize) -> u64 {
    assert!(rows >= 1);
    rows as u64 + 1
}

/// Worst case in clock cycles when `k` other rows need a write-back during
/// the upset's residency and the scrubber steps every `divider` cycles.
pub fn worst_case_correction_cycles_with(rows: usize, k: u64, divider: u32) -> u64 {
    (worst_case_correction_cycles(rows) + k) * divider.max(1) as u64
}

fn bits_for(max_value: u64) -> u8 {
    (64 - max_value.leading_zeros()).max(1) as u8
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scrubber {
    config: ScrubberConfig,
    rows: usize,
    row_pointer: CellId,
    phase: CellId,
    pending: CellId,
    divider_count: Option<CellId>,
}

impl Scrubber {
    pub fn new(cells: &mut CellStore, rows: usize, config: ScrubberConfig) -> Self {
        assert!(rows >= 1 && config.divider >= 1);
        let d = Domain::Sram;
        Scrubber {
            config,
            rows,
            row_pointer: cells.alloc("scrub.row_pointer", d, bits_for(rows as u64 - 1), 0),
            phase: cells.alloc("scrub.phase", d, 1, 0),
            pending: cells.alloc("scrub.pending_word", d, 32, 0),
            divider_count: (config.divider > 1)
                .then(|| cells.alloc("scrub.divider_count", d, bits_for(config.divider as u64 - 1), 0)),
        }
    }

    pub fn config(&self) -> ScrubberConfig {
        self.config
    }

    pub fn row_pointer(&self, cells: &CellStore) -> usize {
        self.pointer(cells)
    }

    pub fn phase(&self, cells: &CellStore) -> ScrubPhase {
        if cells.read_bool(self.phase) {
            ScrubPhase::WriteBack
        } else {
            ScrubPhase::Read
        }
    }

    fn pointer(&self, cells: &CellStore) -> usize {
        let p = cells.read(self.row_pointer) as usize;
        // Only reachable through an uncorrectable upset of the pointer.
        if p >= self.rows {
            0
        } else {
            p
        }
    }

    fn advance(&self, cells: &mut CellStore, row: usize) {
        cells.stage(self.row_pointer, ((row + 1) % self.rows) as u32);
    }

    /// One clock cycle of the scrubber, run after the core's SRAM access.
    /// `core_write_row` is the row the core wrote in this cycle, if any.
    pub fn step(&self, cells: &mut CellStore, sram: &mut SramArray, core_write_row: Option<usize>) -> ScrubAction {
        if !self.config.enabled {
            return ScrubAction::Idle;
        }
        if let Some(id) = self.divider_count {
            let count = cells.read(id);
            cells.stage(id, (count + 1) % self.config.divider);
            if count != 0 {
                return ScrubAction::Idle;
            }
        }
        let row = self.pointer(cells);
        match self.phase(cells) {
            ScrubPhase::Read => {
                let [a, b, c] = sram.scrub_port_read(row).expect("pointer below row count");
                if a == b && b == c {
                    self.advance(cells, row);
                    ScrubAction::CleanRead { row }
                } else {
                    let voted = majority_vote(a, b, c).value;
                    cells.stage(self.pending, voted);
                    cells.stage(self.phase, 1);
                    ScrubAction::Mismatch {
                        row,
                        voted,
                        first_observation: sram.observe(row),
                    }
                }
            }
            ScrubPhase::WriteBack => {
                cells.stage(self.phase, 0);
                self.advance(cells, row);
                if core_write_row == Some(row) {
                    ScrubAction::Skipped { row }
                } else {
                    let word = cells.read(self.pending);
                    sram.scrub_port_write(row, word).expect("pointer below row count");
                    ScrubAction::WriteBack { row, word }
                }
            }
        }
    }
}
