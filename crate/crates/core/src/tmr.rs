//! Triple modular redundancy primitives.
//!
//! Every sequential element of the simulated system is a [`TmrCell`]: three
//! replicas of the same register followed by a bitwise majority voter. The
//! voter output is what downstream combinational logic sees; its discrepancy
//! output is what the SEU counters aggregate. On cycles where a cell is not
//! written, the feedback path reloads all three replicas with the voted
//! value, so a single upset never survives more than one clock edge.
//!
//! [`CellStore`] holds all cells of one machine and implements the
//! next-state discipline: combinational logic reads voted values and stages
//! writes, and [`CellStore::clock_edge`] latches them.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Replica count of every protected element.
pub const REPLICAS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TmrError {
    #[error("cell width {0} outside 1..=32")]
    InvalidWidth(u8),
    #[error("value {value:#x} does not fit in {width} bits")]
    ValueOutOfRange { value: u32, width: u8 },
    #[error("replica index {0} outside 0..=2")]
    ReplicaOutOfRange(u8),
    #[error("bit {bit} outside cell width {width}")]
    BitOutOfRange { bit: u8, width: u8 },
}

/// Power/SEU-accounting domain of a sequential element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Core,
    Sram,
    Peripherals,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Core, Domain::Sram, Domain::Peripherals];

    /// Index of the domain's SEU counter in the memory-mapped counter block.
    pub fn index(self) -> usize {
        match self {
            Domain::Core => 0,
            Domain::Sram => 1,
            Domain::Peripherals => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Core => "core",
            Domain::Sram => "sram",
            Domain::Peripherals => "peripherals",
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        match s {
            "core" => Some(Domain::Core),
            "sram" => Some(Domain::Sram),
            "peripherals" | "periph" => Some(Domain::Peripherals),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Output of a three-input bitwise majority voter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteResult {
    pub value: u32,
    /// Asserted when the three inputs are not all bitwise equal.
    pub discrepancy: bool,
}

/// Bitwise 2-of-3 majority with discrepancy flag.
#[inline]
pub fn majority_vote(a: u32, b: u32, c: u32) -> VoteResult {
    VoteResult {
        value: (a & b) | (a & c) | (b & c),
        discrepancy: !(a == b && b == c),
    }
}

#[inline]
fn width_mask(width: u8) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

/// Identifier of a sequential element, unique within one machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementId(pub u32);

/// One triplicated sequential element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmrCell {
    replicas: [u32; REPLICAS],
    width: u8,
    element: ElementId,
    domain: Domain,
}

impl TmrCell {
    pub fn new(element: ElementId, domain: Domain, width: u8) -> Result<Self, TmrError> {
        if !(1..=32).contains(&width) {
            return Err(TmrError::InvalidWidth(width));
        }
        Ok(TmrCell {
            replicas: [0; REPLICAS],
            width,
            element,
            domain,
        })
    }

    /// Builds a cell with explicit (possibly disagreeing) replica contents.
    pub fn from_replicas(
        element: ElementId,
        domain: Domain,
        width: u8,
        replicas: [u32; REPLICAS],
    ) -> Result<Self, TmrError> {
        let mut cell = TmrCell::new(element, domain, width)?;
        for &value in &replicas {
            cell.check_range(value)?;
        }
        cell.replicas = replicas;
        Ok(cell)
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn element(&self) -> ElementId {
        self.element
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn replicas(&self) -> [u32; REPLICAS] {
        self.replicas
    }

    pub fn mask(&self) -> u32 {
        width_mask(self.width)
    }

    fn check_range(&self, value: u32) -> Result<(), TmrError> {
        if value & !self.mask() != 0 {
            Err(TmrError::ValueOutOfRange {
                value,
                width: self.width,
            })
        } else {
            Ok(())
        }
    }

    #[inline]
    pub fn vote(&self) -> VoteResult {
        let [a, b, c] = self.replicas;
        majority_vote(a, b, c)
    }

    #[inline]
    pub fn is_clean(&self) -> bool {
        let [a, b, c] = self.replicas;
        a == b && b == c
    }

    /// Writes `value` into all three replicas.
    pub fn write(&mut self, value: u32) -> Result<(), TmrError> {
        self.check_range(value)?;
        self.replicas = [value; REPLICAS];
        Ok(())
    }

    /// Feedback path: reloads every replica with the voted value and reports
    /// whether the replicas disagreed beforehand.
    #[inline]
    pub fn refresh(&mut self) -> bool {
        let vote = self.vote();
        self.replicas = [vote.value; REPLICAS];
        vote.discrepancy
    }

    /// Inverts one bit of one replica.
    pub fn flip(&mut self, replica: u8, bit: u8) -> Result<(), TmrError> {
        if replica as usize >= REPLICAS {
            return Err(TmrError::ReplicaOutOfRange(replica));
        }
        if bit >= self.width {
            return Err(TmrError::BitOutOfRange {
                bit,
                width: self.width,
            });
        }
        self.replicas[replica as usize] ^= 1 << bit;
        Ok(())
    }
}

/// Value-semantics write: returns a copy of `cell` with all replicas set.
pub fn tmr_write(cell: &TmrCell, value: u32) -> Result<TmrCell, TmrError> {
    let mut out = cell.clone();
    out.write(value)?;
    Ok(out)
}

/// Value-semantics feedback refresh.
pub fn feedback_refresh(cell: &TmrCell) -> (TmrCell, bool) {
    let mut out = cell.clone();
    let discrepancy = out.refresh();
    (out, discrepancy)
}

/// Value-semantics single-bit upset.
pub fn inject_bit_flip(cell: &TmrCell, replica: u8, bit: u8) -> Result<TmrCell, TmrError> {
    let mut out = cell.clone();
    out.flip(replica, bit)?;
    Ok(out)
}

/// Handle to a cell inside a [`CellStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub(crate) u32);

impl CellId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn element(self) -> ElementId {
        ElementId(self.0)
    }
}

/// Static description of one allocated cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellInfo {
    pub name: String,
    pub domain: Domain,
    pub width: u8,
    pub reset: u32,
}

/// All sequential elements of one machine, with staged next-state writes.
///
/// Reads return voted values. Writes are staged and only become visible at
/// the next [`clock_edge`](Self::clock_edge), which first runs the feedback
/// refresh over every cell and then latches the staged values, so a written
/// cell takes its new value and every other cell takes its voted value.
#[derive(Debug, Clone, Default)]
pub struct CellStore {
    cells: Vec<TmrCell>,
    info: Vec<CellInfo>,
    staged: Vec<(CellId, u32)>,
    // Set whenever an upset is injected; cleared once a refresh leaves every
    // cell clean. While false, refresh and voting are identities and skipped.
    dirty: bool,
}

impl CellStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates a cell holding `reset` in all replicas.
    ///
    /// Panics on a width outside 1..=32 or a reset value that does not fit;
    /// both are layout bugs, not runtime conditions.
    pub fn alloc(&mut self, name: impl Into<String>, domain: Domain, width: u8, reset: u32) -> CellId {
        let id = CellId(self.cells.len() as u32);
        let mut cell = TmrCell::new(id.element(), domain, width).expect("cell width");
        cell.write(reset).expect("reset value fits cell width");
        self.cells.push(cell);
        self.info.push(CellInfo {
            name: name.into(),
            domain,
            width,
            reset,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, id: CellId) -> &TmrCell {
        &self.cells[id.index()]
    }

    pub fn info(&self, id: CellId) -> &CellInfo {
        &self.info[id.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.cells.len() as u32).map(CellId)
    }

    pub fn find(&self, name: &str) -> Option<CellId> {
        self.info
            .iter()
            .position(|i| i.name == name)
            .map(|i| CellId(i as u32))
    }

    /// Voted value of a cell.
    #[inline]
    pub fn read(&self, id: CellId) -> u32 {
        let cell = &self.cells[id.index()];
        if self.dirty {
            cell.vote().value
        } else {
            cell.replicas[0]
        }
    }

    #[inline]
    pub fn read_bool(&self, id: CellId) -> bool {
        self.read(id) & 1 != 0
    }

    /// Stages a write for the next clock edge. Values are truncated to the
    /// cell width, as the hardware register would.
    #[inline]
    pub fn stage(&mut self, id: CellId, value: u32) {
        let mask = self.cells[id.index()].mask();
        self.staged.push((id, value & mask));
    }

    pub fn staged(&self) -> &[(CellId, u32)] {
        &self.staged
    }

    /// Latches one clock edge: feedback refresh on every cell, then staged
    /// writes (the write mux overrides the feedback input).
    pub fn clock_edge(&mut self) {
        if self.dirty {
            for cell in &mut self.cells {
                cell.refresh();
            }
            self.dirty = false;
        }
        for (id, value) in self.staged.drain(..) {
            self.cells[id.index()].replicas = [value; REPLICAS];
        }
    }

    /// Reference clock edge without the clean-store shortcut.
    #[doc(hidden)]
    pub fn clock_edge_exhaustive(&mut self) {
        for cell in &mut self.cells {
            cell.refresh();
        }
        self.dirty = false;
        for (id, value) in self.staged.drain(..) {
            self.cells[id.index()].replicas = [value; REPLICAS];
        }
    }

    /// Injects a single-bit upset into one replica.
    pub fn flip(&mut self, id: CellId, replica: u8, bit: u8) -> Result<(), TmrError> {
        self.cells[id.index()].flip(replica, bit)?;
        self.dirty = true;
        Ok(())
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    /// Cells whose voters currently assert discrepancy.
    pub fn discrepancies(&self) -> Vec<CellId> {
        if !self.dirty {
            return Vec::new();
        }
        self.ids().filter(|&id| !self.cell(id).is_clean()).collect()
    }

    pub(crate) fn replicas_mut(&mut self, id: CellId) -> &mut [u32; REPLICAS] {
        self.dirty = true;
        &mut self.cells[id.index()].replicas
    }

    /// Re-derives the dirty flag after replicas were overwritten wholesale.
    pub(crate) fn recompute_dirty(&mut self) {
        self.dirty = self.cells.iter().any(|c| !c.is_clean());
    }

    pub(crate) fn restage(&mut self, staged: Vec<(CellId, u32)>) {
        self.staged = staged;
    }

    /// Total number of injectable bits (replicas × width) in `domain`.
    pub fn domain_bits(&self, domain: Domain) -> u64 {
        self.info
            .iter()
            .filter(|i| i.domain == domain)
            .map(|i| REPLICAS as u64 * i.width as u64)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(width: u8, replicas: [u32; 3]) -> TmrCell {
        TmrCell::from_replicas(ElementId(0), Domain::Core, width, replicas).unwrap()
    }

    // Per-bit 2-of-3 by explicit enumeration.
    fn per_bit_majority(a: u32, b: u32, c: u32) -> u32 {
        let mut out = 0;
        for bit in 0..32 {
            let ones = ((a >> bit) & 1) + ((b >> bit) & 1) + ((c >> bit) & 1);
            if ones >= 2 {
                out |= 1 << bit;
            }
        }
        out
    }

    #[test]
    fn vote_examples() {
        assert_eq!(
            majority_vote(0x5A5A5A5A, 0x5A5A5A5A, 0x5A5A5A5A),
            VoteResult { value: 0x5A5A5A5A, discrepancy: false }
        );
        assert_eq!(
            majority_vote(0xFFFF_FFFF, 0, 0xFFFF_FFFF),
            VoteResult { value: 0xFFFF_FFFF, discrepancy: true }
        );
        assert_eq!(per_bit_majority(0b101, 0b011, 0b110), 0b111);
        assert_eq!(
            majority_vote(0b101, 0b011, 0b110),
            VoteResult { value: 0b111, discrepancy: true }
        );
    }

    #[test]
    fn write_examples() {
        let c = tmr_write(&cell(8, [1, 2, 3]), 7).unwrap();
        assert_eq!(c.replicas(), [7, 7, 7]);
        let c = tmr_write(&cell(8, [0, 0, 0]), 0).unwrap();
        assert_eq!(c.replicas(), [0, 0, 0]);
        assert_eq!(
            tmr_write(&cell(8, [0, 0, 0]), 0xFFFF),
            Err(TmrError::ValueOutOfRange { value: 0xFFFF, width: 8 })
        );
    }

    #[test]
    fn refresh_examples() {
        let (c, d) = feedback_refresh(&cell(8, [5, 5, 5]));
        assert_eq!((c.replicas(), d), ([5, 5, 5], false));
        let (c, d) = feedback_refresh(&cell(8, [5, 7, 5]));
        assert_eq!((c.replicas(), d), ([5, 5, 5], true));
        // Three different words: the vote matches none of them.
        assert_eq!(per_bit_majority(1, 2, 4), 0);
        let (c, d) = feedback_refresh(&cell(8, [1, 2, 4]));
        assert_eq!((c.replicas(), d), ([0, 0, 0], true));
    }

    #[test]
    fn flip_examples() {
        let c = inject_bit_flip(&cell(8, [4, 4, 4]), 1, 0).unwrap();
        assert_eq!(c.replicas(), [4, 5, 4]);
        let c = inject_bit_flip(&cell(8, [0, 0, 0]), 0, 2).unwrap();
        assert_eq!(c.replicas(), [4, 0, 0]);
        let twice = inject_bit_flip(&c, 0, 2).unwrap();
        assert_eq!(twice.replicas(), [0, 0, 0]);
        assert_eq!(
            inject_bit_flip(&cell(8, [0; 3]), 3, 0),
            Err(TmrError::ReplicaOutOfRange(3))
        );
        assert_eq!(
            inject_bit_flip(&cell(8, [0; 3]), 0, 8),
            Err(TmrError::BitOutOfRange { bit: 8, width: 8 })
        );
    }

    #[test]
    fn width_bounds() {
        assert_eq!(TmrCell::new(ElementId(0), Domain::Core, 0), Err(TmrError::InvalidWidth(0)));
        assert_eq!(TmrCell::new(ElementId(0), Domain::Core, 33), Err(TmrError::InvalidWidth(33)));
        assert!(TmrCell::new(ElementId(0), Domain::Core, 32).is_ok());
        assert!(TmrCell::new(ElementId(0), Domain::Core, 1).is_ok());
    }

    #[test]
    fn store_staging_and_feedback() {
        let mut store = CellStore::new();
        let a = store.alloc("a", Domain::Core, 32, 0x1234);
        let b = store.alloc("b", Domain::Peripherals, 8, 0x55);
        store.flip(a, 2, 31).unwrap();
        store.flip(b, 0, 0).unwrap();
        assert_eq!(store.read(a), 0x1234);
        assert_eq!(store.discrepancies(), vec![a, b]);
        store.stage(b, 0x0F);
        assert_eq!(store.read(b), 0x55, "staged value invisible before the edge");
        store.clock_edge();
        assert_eq!(store.cell(a).replicas(), [0x1234; 3]);
        assert_eq!(store.cell(b).replicas(), [0x0F; 3]);
        assert!(store.discrepancies().is_empty());
        assert!(!store.is_dirty());
    }

    #[test]
    fn clean_store_shortcut_matches_exhaustive_edge() {
        let mut fast = CellStore::new();
        for i in 0..8 {
            fast.alloc(format!("c{i}"), Domain::Core, 16, i * 3);
        }
        let mut slow = fast.clone();
        let script: [(u32, u8, u8, Option<u32>); 5] =
            [(0, 0, 1, None), (3, 2, 15, Some(9)), (3, 1, 15, None), (7, 1, 0, Some(1)), (5, 0, 4, None)];
        for (cell, replica, bit, write) in script {
            for s in [&mut fast, &mut slow] {
                s.flip(CellId(cell), replica, bit).unwrap();
                if let Some(w) = write {
                    s.stage(CellId(0), w);
                }
            }
            fast.clock_edge();
            slow.clock_edge_exhaustive();
            for id in fast.ids() {
                assert_eq!(fast.cell(id), slow.cell(id));
            }
        }
    }
}
