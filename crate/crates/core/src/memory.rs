//! Triplicated SRAM, access widths and the global memory map.
//!
//! | Region       | Base          | Size     |
//! |--------------|---------------|----------|
//! | SRAM         | `0x0000_0000` | `0x8000` |
//! | GPIO         | `0x1000_0000` | `0x1000` |
//! | UART         | `0x1000_1000` | `0x1000` |
//! | SEU counters | `0x1000_2000` | `0x000C` |
//!
//! The SRAM is three replica banks of 32-bit rows. The core port reads the
//! bitwise-voted word; the scrubber port sees raw replicas.

use crate::tmr::{majority_vote, VoteResult, REPLICAS};
use thiserror::Error;

pub const SRAM_BASE: u32 = 0x0000_0000;
pub const SRAM_SIZE: u32 = 0x8000;
/// 32 kB of 4-byte rows.
pub const SRAM_ROWS: usize = (SRAM_SIZE / 4) as usize;
pub const GPIO_BASE: u32 = 0x1000_0000;
pub const UART_BASE: u32 = 0x1000_1000;
pub const SEU_COUNTER_BASE: u32 = 0x1000_2000;
const PERIPHERAL_BLOCK: u32 = 0x1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    Byte,
    Half,
    Word,
}

impl Width {
    #[inline]
    pub fn bytes(self) -> u32 {
        match self {
            Width::Byte => 1,
            Width::Half => 2,
            Width::Word => 4,
        }
    }

    #[inline]
    pub fn mask(self) -> u32 {
        match self {
            Width::Byte => 0xFF,
            Width::Half => 0xFFFF,
            Width::Word => u32::MAX,
        }
    }

    /// Zero- or sign-extends a loaded value of this width.
    #[inline]
    pub fn extend(self, value: u32, signed: bool) -> u32 {
        match (self, signed) {
            (Width::Byte, true) => value as u8 as i8 as i32 as u32,
            (Width::Half, true) => value as u16 as i16 as i32 as u32,
            _ => value & self.mask(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("unmapped address {addr:#010x}")]
    Unmapped { addr: u32 },
    #[error("write to read-only address {addr:#010x}")]
    ReadOnly { addr: u32 },
    #[error("unsupported access width at {addr:#010x}")]
    BadAccess { addr: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("row {row} outside SRAM of {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("image of {len} bytes at offset {offset:#x} exceeds SRAM of {size} bytes")]
    ImageTooLarge { offset: u32, len: usize, size: usize },
    #[error("replica {0} outside 0..=2")]
    ReplicaOutOfRange(u8),
    #[error("bit {0} outside 0..=31")]
    BitOutOfRange(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Sram,
    Gpio,
    Uart,
    SeuCounters,
}

/// Address decoder for the fixed memory map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryMap {
    pub sram_size: u32,
}

impl Default for MemoryMap {
    fn default() -> Self {
        MemoryMap { sram_size: SRAM_SIZE }
    }
}

impl MemoryMap {
    /// Region and offset within it, or `None` for unmapped addresses.
    pub fn decode(&self, addr: u32) -> Option<(Region, u32)> {
        if addr.wrapping_sub(SRAM_BASE) < self.sram_size {
            return Some((Region::Sram, addr - SRAM_BASE));
        }
        for (base, region) in [
            (GPIO_BASE, Region::Gpio),
            (UART_BASE, Region::Uart),
            (SEU_COUNTER_BASE, Region::SeuCounters),
        ] {
            if addr.wrapping_sub(base) < PERIPHERAL_BLOCK {
                return Some((region, addr - base));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    InstrFetch,
    Load,
    Store,
}

/// One bus transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemRequest {
    pub kind: RequestKind,
    pub addr: u32,
    pub width: Width,
    /// Store data in the low bits; ignored for reads.
    pub data: u32,
}

impl MemRequest {
    /// Byte lanes of the containing 32-bit row touched by this request.
    pub fn byte_enables(&self) -> u8 {
        let lanes = match self.width {
            Width::Byte => 0b0001,
            Width::Half => 0b0011,
            Width::Word => 0b1111,
        };
        lanes << (self.addr & 3)
    }

    /// Store data shifted into its row lanes.
    pub fn lane_data(&self) -> u32 {
        (self.data & self.width.mask()) << (8 * (self.addr & 3))
    }
}

/// Expands a 4-bit byte-enable set into a 32-bit mask.
#[inline]
pub fn lane_mask(byte_enables: u8) -> u32 {
    (0..4).filter(|i| byte_enables & (1 << i) != 0).fold(0, |m, i| m | (0xFF << (8 * i)))
}

/// Minimal data-side interface used by the functional stepper.
pub trait Bus {
    /// The 32-bit little-endian window at `pc`. Fails if the instruction
    /// found there does not lie entirely in mapped memory.
    fn fetch(&mut self, pc: u32) -> Result<u32, BusError>;
    fn load(&mut self, addr: u32, width: Width) -> Result<u32, BusError>;
    fn store(&mut self, addr: u32, width: Width, data: u32) -> Result<(), BusError>;
    /// Whether `addr` is served by the shared SRAM (and so contends with
    /// instruction fetch at the bridge).
    fn is_sram(&self, addr: u32) -> bool;
}

/// Three replica banks of 32-bit rows with a core port and a scrubber port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SramArray {
    banks: [Vec<u32>; REPLICAS],
    /// Set when a discrepancy in the row has been counted; cleared when the
    /// row is rewritten. Keeps one physical upset from being counted once
    /// per observing access.
    observed: Vec<bool>,
}

impl SramArray {
    pub fn new(rows: usize) -> Self {
        assert!(rows >= 1, "SRAM needs at least one row");
        SramArray {
            banks: std::array::from_fn(|_| vec![0; rows]),
            observed: vec![false; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.observed.len()
    }

    pub fn size_bytes(&self) -> usize {
        self.rows() * 4
    }

    fn check_row(&self, row: usize) -> Result<(), MemError> {
        if row >= self.rows() {
            Err(MemError::RowOutOfRange { row, rows: self.rows() })
        } else {
            Ok(())
        }
    }

    /// Writes `bytes` at byte `offset` into all three replicas.
    pub fn load_bytes(&mut self, offset: u32, bytes: &[u8]) -> Result<(), MemError> {
        let end = offset as usize + bytes.len();
        if end > self.size_bytes() {
            return Err(MemError::ImageTooLarge {
                offset,
                len: bytes.len(),
                size: self.size_bytes(),
            });
        }
        for (i, &b) in bytes.iter().enumerate() {
            let addr = offset as usize + i;
            let (row, shift) = (addr / 4, 8 * (addr % 4));
            for bank in &mut self.banks {
                bank[row] = (bank[row] & !(0xFF << shift)) | ((b as u32) << shift);
            }
        }
        Ok(())
    }

    /// Voted contents of `row`. Panics if out of range.
    #[inline]
    pub fn read_voted(&self, row: usize) -> VoteResult {
        majority_vote(self.banks[0][row], self.banks[1][row], self.banks[2][row])
    }

    #[inline]
    pub fn row_clean(&self, row: usize) -> bool {
        let w = self.banks[0][row];
        self.banks[1][row] == w && self.banks[2][row] == w
    }

    /// Core-port write: enabled lanes take `data`, the other lanes take the
    /// voted word, and all three replicas receive the result.
    pub fn write_row(&mut self, row: usize, data: u32, byte_enables: u8) {
        let mask = lane_mask(byte_enables);
        let merged = (self.read_voted(row).value & !mask) | (data & mask);
        for bank in &mut self.banks {
            bank[row] = merged;
        }
        self.observed[row] = false;
    }

    /// Raw replica words of `row`.
    pub fn scrub_port_read(&self, row: usize) -> Result<[u32; REPLICAS], MemError> {
        self.check_row(row)?;
        Ok([self.banks[0][row], self.banks[1][row], self.banks[2][row]])
    }

    /// Sets every replica of `row` to `word`.
    pub fn scrub_port_write(&mut self, row: usize, word: u32) -> Result<(), MemError> {
        self.check_row(row)?;
        for bank in &mut self.banks {
            bank[row] = word;
        }
        self.observed[row] = false;
        Ok(())
    }

    /// Inverts one bit of one replica of `row`.
    pub fn flip(&mut self, replica: u8, row: usize, bit: u8) -> Result<(), MemError> {
        self.check_row(row)?;
        if replica as usize >= REPLICAS {
            return Err(MemError::ReplicaOutOfRange(replica));
        }
        if bit >= 32 {
            return Err(MemError::BitOutOfRange(bit));
        }
        self.banks[replica as usize][row] ^= 1 << bit;
        Ok(())
    }

    /// Records an observation of a discrepant row; true if it is the first
    /// since the row was last written.
    pub fn observe(&mut self, row: usize) -> bool {
        !std::mem::replace(&mut self.observed[row], true)
    }

    pub fn is_observed(&self, row: usize) -> bool {
        self.observed[row]
    }

    pub(crate) fn set_observed(&mut self, row: usize, value: bool) {
        self.observed[row] = value;
    }

    pub(crate) fn banks(&self) -> &[Vec<u32>; REPLICAS] {
        &self.banks
    }

    pub(crate) fn banks_mut(&mut self) -> &mut [Vec<u32>; REPLICAS] {
        &mut self.banks
    }

    /// Voted image of the whole array.
    pub fn voted_image(&self) -> Vec<u32> {
        (0..self.rows()).map(|r| self.read_voted(r).value).collect()
    }

    /// Rows whose replicas currently disagree.
    pub fn dirty_rows(&self) -> Vec<usize> {
        (0..self.rows()).filter(|&r| !self.row_clean(r)).collect()
    }

    fn row_of(&self, addr: u32) -> Result<usize, BusError> {
        let row = (addr / 4) as usize;
        if row < self.rows() {
            Ok(row)
        } else {
            Err(BusError::Unmapped { addr })
        }
    }

    /// Voted halfword-granular fetch window at `pc`.
    pub fn fetch_window(&self, pc: u32) -> Result<u32, BusError> {
        let row = self.row_of(pc)?;
        let word = self.read_voted(row).value;
        if pc & 2 == 0 {
            return Ok(word);
        }
        let low = word >> 16;
        if crate::isa::instruction_length(low as u16) == 2 {
            // A compressed instruction in the last halfword needs no
            // second row.
            let high = if row + 1 < self.rows() { self.read_voted(row + 1).value } else { 0 };
            return Ok(low | (high << 16));
        }
        let next = self.row_of(pc.wrapping_add(2))?;
        Ok(low | (self.read_voted(next).value << 16))
    }
}

impl Bus for SramArray {
    fn fetch(&mut self, pc: u32) -> Result<u32, BusError> {
        self.fetch_window(pc)
    }

    fn load(&mut self, addr: u32, width: Width) -> Result<u32, BusError> {
        let row = self.row_of(addr)?;
        Ok((self.read_voted(row).value >> (8 * (addr & 3))) & width.mask())
    }

    fn store(&mut self, addr: u32, width: Width, data: u32) -> Result<(), BusError> {
        let row = self.row_of(addr)?;
        let req = MemRequest {
            kind: RequestKind::Store,
            addr,
            width,
            data,
        };
        self.write_row(row, req.lane_data(), req.byte_enables());
        Ok(())
    }

    fn is_sram(&self, addr: u32) -> bool {
        ((addr / 4) as usize) < self.rows()
    }
}

/// First-seen bookkeeping for a core-port read of a discrepant SRAM row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub row: usize,
    /// False if this row's discrepancy was already counted.
    pub first: bool,
}

/// The core's view of the address space for one cycle: SRAM through the
/// bridge plus the memory-mapped peripherals.
pub struct MemorySystem<'a> {
    pub map: MemoryMap,
    pub sram: &'a mut SramArray,
    pub periph: &'a mut crate::peripherals::Peripherals,
    pub cells: &'a mut crate::tmr::CellStore,
}

impl MemorySystem<'_> {
    fn observe(&mut self, row: usize) -> (u32, Option<Observation>) {
        let vote = self.sram.read_voted(row);
        let obs = vote.discrepancy.then(|| Observation {
            row,
            first: self.sram.observe(row),
        });
        (vote.value, obs)
    }

    /// Voted SRAM row read through the instruction port.
    pub fn fetch_row(&mut self, addr: u32) -> Result<(u32, Option<Observation>), BusError> {
        match self.map.decode(addr) {
            Some((Region::Sram, off)) => Ok(self.observe((off / 4) as usize)),
            _ => Err(BusError::Unmapped { addr }),
        }
    }

    /// Data-port read. SRAM reads are voted and report an observation when
    /// the row's replicas disagree.
    pub fn core_read(&mut self, addr: u32, width: Width) -> Result<(u32, Option<Observation>), BusError> {
        if !addr.is_multiple_of(width.bytes()) {
            return Err(BusError::BadAccess { addr });
        }
        match self.map.decode(addr) {
            Some((Region::Sram, off)) => {
                let (word, obs) = self.observe((off / 4) as usize);
                Ok(((word >> (8 * (off & 3))) & width.mask(), obs))
            }
            Some((region, off)) => Ok((self.periph.read(self.cells, region, off, width)?, None)),
            None => Err(BusError::Unmapped { addr }),
        }
    }

    /// Data-port write. Returns the SRAM row written, if any, for the
    /// scrubber's conflict check.
    pub fn core_write(&mut self, addr: u32, width: Width, data: u32) -> Result<Option<usize>, BusError> {
        if !addr.is_multiple_of(width.bytes()) {
            return Err(BusError::BadAccess { addr });
        }
        match self.map.decode(addr) {
            Some((Region::Sram, off)) => {
                let req = MemRequest {
                    kind: RequestKind::Store,
                    addr: off,
                    width,
                    data,
                };
                let row = (off / 4) as usize;
                self.sram.write_row(row, req.lane_data(), req.byte_enables());
                Ok(Some(row))
            }
            Some((region, off)) => {
                self.periph.write(self.cells, region, off, width, data)?;
                Ok(None)
            }
            None => Err(BusError::Unmapped { addr }),
        }
    }

    pub fn is_sram(&self, addr: u32) -> bool {
        matches!(self.map.decode(addr), Some((Region::Sram, _)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_system<R>(f: impl FnOnce(&mut MemorySystem) -> R) -> R {
        let mut cells = crate::tmr::CellStore::new();
        let mut periph = crate::peripherals::Peripherals::new(&mut cells);
        let mut sram = SramArray::new(SRAM_ROWS);
        let mut sys = MemorySystem {
            map: MemoryMap::default(),
            sram: &mut sram,
            periph: &mut periph,
            cells: &mut cells,
        };
        f(&mut sys)
    }

    #[test]
    fn core_read_reports_first_observation_only() {
        with_system(|m| {
            m.core_write(0x40, Width::Word, 0xDEAD_BEEF).unwrap();
            assert_eq!(m.core_read(0x40, Width::Word).unwrap(), (0xDEAD_BEEF, None));
            m.sram.flip(2, 0x10, 31).unwrap();
            assert_eq!(
                m.core_read(0x40, Width::Word).unwrap(),
                (0xDEAD_BEEF, Some(Observation { row: 0x10, first: true }))
            );
            assert_eq!(
                m.core_read(0x42, Width::Half).unwrap(),
                (0xDEAD, Some(Observation { row: 0x10, first: false }))
            );
        });
    }

    #[test]
    fn core_port_peripherals() {
        with_system(|m| {
            assert_eq!(m.core_read(0x1000_2004, Width::Word).unwrap(), (0, None));
            assert_eq!(m.core_write(0x1000_2000, Width::Word, 1), Err(BusError::ReadOnly { addr: 0x1000_2000 }));
            assert_eq!(m.core_read(0x2000_0000, Width::Word), Err(BusError::Unmapped { addr: 0x2000_0000 }));
            assert_eq!(m.core_write(0x1F, Width::Byte, 0x1FF).unwrap(), Some(7));
            assert_eq!(m.sram.scrub_port_read(7).unwrap(), [0xFF00_0000; 3]);
        });
    }

    #[test]
    fn map_decodes_regions() {
        let m = MemoryMap::default();
        assert_eq!(m.decode(0), Some((Region::Sram, 0)));
        assert_eq!(m.decode(0x7FFF), Some((Region::Sram, 0x7FFF)));
        assert_eq!(m.decode(0x8000), None);
        assert_eq!(m.decode(0x1000_0104), Some((Region::Gpio, 0x104)));
        assert_eq!(m.decode(0x1000_1008), Some((Region::Uart, 8)));
        assert_eq!(m.decode(0x1000_2004), Some((Region::SeuCounters, 4)));
        assert_eq!(m.decode(0x1000_3000), None);
    }

    #[test]
    fn voted_read_masks_single_replica_upset() {
        let mut s = SramArray::new(16);
        s.load_bytes(8, &0xDEAD_BEEFu32.to_le_bytes()).unwrap();
        assert_eq!(s.read_voted(2), VoteResult { value: 0xDEAD_BEEF, discrepancy: false });
        s.flip(2, 2, 31).unwrap();
        assert_eq!(s.read_voted(2), VoteResult { value: 0xDEAD_BEEF, discrepancy: true });
        let raw = s.scrub_port_read(2).unwrap();
        assert_eq!(raw, [0xDEAD_BEEF, 0xDEAD_BEEF, 0x5EAD_BEEF]);
    }

    #[test]
    fn byte_write_touches_only_enabled_lane() {
        let mut s = SramArray::new(4);
        s.store(0, Width::Word, 0x1122_3344).unwrap();
        s.store(1, Width::Byte, 0xAB).unwrap();
        assert_eq!(s.scrub_port_read(0).unwrap(), [0x1122_AB44; 3]);
        s.store(2, Width::Half, 0xBEEF).unwrap();
        assert_eq!(s.load(0, Width::Word).unwrap(), 0xBEEF_AB44);
        assert_eq!(s.load(3, Width::Byte).unwrap(), 0xBE);
    }

    #[test]
    fn scrub_port_range_checked() {
        let mut s = SramArray::new(SRAM_ROWS);
        assert!(s.scrub_port_read(8191).is_ok());
        assert_eq!(s.scrub_port_read(8192), Err(MemError::RowOutOfRange { row: 8192, rows: 8192 }));
        assert!(s.scrub_port_write(8192, 0).is_err());
    }

    #[test]
    fn scrub_write_restores_equality_and_is_idempotent() {
        let mut s = SramArray::new(4);
        s.flip(0, 1, 3).unwrap();
        assert!(!s.row_clean(1));
        let v = s.read_voted(1).value;
        s.scrub_port_write(1, v).unwrap();
        assert!(s.row_clean(1));
        let before = s.clone();
        s.scrub_port_write(1, v).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn image_bounds() {
        let mut s = SramArray::new(SRAM_ROWS);
        assert!(s.load_bytes(0, &vec![0u8; 32 * 1024]).is_ok());
        assert!(s.load_bytes(0, &vec![0u8; 33 * 1024]).is_err());
        assert!(s.load_bytes(4, &vec![0u8; 32 * 1024]).is_err());
    }

    #[test]
    fn observation_dedup_resets_on_write() {
        let mut s = SramArray::new(2);
        assert!(s.observe(0));
        assert!(!s.observe(0));
        s.write_row(0, 1, 0b1111);
        assert!(s.observe(0));
    }

    #[test]
    fn fetch_window_straddles_rows() {
        let mut s = SramArray::new(2);
        s.load_bytes(0, &[0x01, 0x45, 0x93, 0x00, 0x10, 0x00, 0x00, 0x00]).unwrap();
        assert_eq!(s.fetch(2).unwrap(), 0x0010_0093);
        // 32-bit instruction in the final halfword runs off the array.
        s.load_bytes(6, &[0x93, 0x00]).unwrap();
        assert_eq!(s.fetch(6), Err(BusError::Unmapped { addr: 8 }));
        s.load_bytes(6, &[0x01, 0x45]).unwrap();
        assert_eq!(s.fetch(6).unwrap(), 0x4501);
    }

    proptest! {
        #[test]
        fn write_then_read_round_trips(addr in 0u32..0x8000, value: u32, w in 0usize..3) {
            let width = [Width::Byte, Width::Half, Width::Word][w];
            let addr = addr & !(width.bytes() - 1);
            let mut s = SramArray::new(SRAM_ROWS);
            s.store(addr, width, value).unwrap();
            prop_assert_eq!(s.load(addr, width).unwrap(), value & width.mask());
        }

        #[test]
        fn single_upset_is_transparent(row in 0usize..64, value: u32, replica in 0u8..3, bit in 0u8..32) {
            let mut s = SramArray::new(64);
            s.write_row(row, value, 0b1111);
            s.flip(replica, row, bit).unwrap();
            prop_assert_eq!(s.load(row as u32 * 4, Width::Word).unwrap(), value);
        }
    }
}
