//! Peripheral domain: GPIO bank, byte-level UART and the SEU counter bank.
//!
//! All software-visible registers are TMR cells in the peripheral domain.
//! The host side of the pins and of the UART (input levels, TX sink, RX
//! queue) lies outside the protected boundary.
//!
//! Register map (offsets from the block base, 32-bit registers; any access
//! width is accepted at a register-aligned offset):
//!
//! GPIO `0x1000_0000`
//! - `0x000` DIR, bit per pin, 1 = output
//! - `0x004` OUT, driven level of output pins
//! - `0x008` IN (read-only): driven level for outputs, host level for inputs
//! - `0x100 + 4*pin` per-pin view: bit 0 level (write sets OUT), bit 1 direction
//!
//! UART `0x1000_1000`
//! - `0x0` TXDATA (write-only): queue one byte
//! - `0x4` RXDATA (read-only): pops one byte; `0x8000_0000` when empty
//! - `0x8` STATUS (read-only): bit 0 tx ready, bit 1 rx available
//!
//! SEU counters `0x1000_2000` (read-only): `+0` core, `+4` SRAM, `+8` peripherals

use crate::memory::{BusError, Region, Width, GPIO_BASE, SEU_COUNTER_BASE, UART_BASE};
use crate::tmr::{CellId, CellStore, Domain};
use std::collections::VecDeque;

pub const GPIO_PINS: u8 = 27;
const PIN_MASK: u32 = (1 << GPIO_PINS) - 1;
/// RXDATA value when no byte is available.
pub const RX_EMPTY: u32 = 0x8000_0000;
const HOLD_VALID: u32 = 0x100;

/// Per-domain counter increments for one cycle: one per asserting voter.
pub fn aggregate_discrepancies<I: IntoIterator<Item = Domain>>(events: I) -> [u64; 3] {
    let mut inc = [0u64; 3];
    for d in events {
        inc[d.index()] += 1;
    }
    inc
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Peripherals {
    gpio_dir: CellId,
    gpio_out: CellId,
    tx_hold: CellId,
    rx_hold: CellId,
    counters: [CellId; 3],
    gpio_in: u32,
    tx_sink: Vec<u8>,
    rx_queue: VecDeque<u8>,
}

impl Peripherals {
    /// Allocates the peripheral registers in `cells`, all reset to zero.
    pub fn new(cells: &mut CellStore) -> Self {
        let p = Domain::Peripherals;
        Peripherals {
            gpio_dir: cells.alloc("gpio.dir", p, GPIO_PINS, 0),
            gpio_out: cells.alloc("gpio.out", p, GPIO_PINS, 0),
            tx_hold: cells.alloc("uart.tx_hold", p, 9, 0),
            rx_hold: cells.alloc("uart.rx_hold", p, 9, 0),
            counters: [
                cells.alloc("seu.core", p, 32, 0),
                cells.alloc("seu.sram", p, 32, 0),
                cells.alloc("seu.peripherals", p, 32, 0),
            ],
            gpio_in: 0,
            tx_sink: Vec::new(),
            rx_queue: VecDeque::new(),
        }
    }

    /// Start-of-cycle transfer between the UART holding registers and the
    /// host: a held TX byte is delivered, an empty RX holder is refilled.
    pub fn tick(&mut self, cells: &mut CellStore) {
        let tx = cells.read(self.tx_hold);
        if tx & HOLD_VALID != 0 {
            self.tx_sink.push(tx as u8);
            cells.stage(self.tx_hold, 0);
        }
        if cells.read(self.rx_hold) & HOLD_VALID == 0 {
            if let Some(b) = self.rx_queue.pop_front() {
                cells.stage(self.rx_hold, HOLD_VALID | b as u32);
            }
        }
    }

    fn pins_in(&self, cells: &CellStore) -> u32 {
        let dir = cells.read(self.gpio_dir);
        (cells.read(self.gpio_out) & dir) | (self.gpio_in & !dir & PIN_MASK)
    }

    /// Core-side read. Reading RXDATA consumes the held byte.
    pub fn read(&mut self, cells: &mut CellStore, region: Region, offset: u32, width: Width) -> Result<u32, BusError> {
        let (base, addr) = Self::locate(region, offset)?;
        let value = match (region, offset) {
            (Region::Gpio, 0x000) => cells.read(self.gpio_dir),
            (Region::Gpio, 0x004) => cells.read(self.gpio_out),
            (Region::Gpio, 0x008) => self.pins_in(cells),
            (Region::Gpio, o) if Self::pin_of(o).is_some() => {
                let pin = Self::pin_of(o).unwrap();
                let level = (self.pins_in(cells) >> pin) & 1;
                let dir = (cells.read(self.gpio_dir) >> pin) & 1;
                level | (dir << 1)
            }
            (Region::Uart, 0x4) => {
                let held = cells.read(self.rx_hold);
                if held & HOLD_VALID != 0 {
                    cells.stage(self.rx_hold, 0);
                    held & 0xFF
                } else {
                    RX_EMPTY
                }
            }
            (Region::Uart, 0x8) => {
                let tx_ready = cells.read(self.tx_hold) & HOLD_VALID == 0;
                let rx_avail = cells.read(self.rx_hold) & HOLD_VALID != 0;
                tx_ready as u32 | ((rx_avail as u32) << 1)
            }
            (Region::SeuCounters, o) if o < 12 => cells.read(self.counters[(o / 4) as usize]),
            _ => return Err(BusError::Unmapped { addr: base + addr }),
        };
        Ok(value & width.mask())
    }

    /// Core-side write.
    pub fn write(
        &mut self,
        cells: &mut CellStore,
        region: Region,
        offset: u32,
        width: Width,
        data: u32,
    ) -> Result<(), BusError> {
        let (base, addr) = Self::locate(region, offset)?;
        let data = data & width.mask();
        match (region, offset) {
            (Region::Gpio, 0x000) => cells.stage(self.gpio_dir, data),
            (Region::Gpio, 0x004) => cells.stage(self.gpio_out, data),
            (Region::Gpio, o) if Self::pin_of(o).is_some() => {
                let pin = Self::pin_of(o).unwrap();
                let set = |reg: u32, on: bool| if on { reg | (1 << pin) } else { reg & !(1 << pin) };
                cells.stage(self.gpio_out, set(cells.read(self.gpio_out), data & 1 != 0));
                cells.stage(self.gpio_dir, set(cells.read(self.gpio_dir), data & 2 != 0));
            }
            (Region::Uart, 0x0) => cells.stage(self.tx_hold, HOLD_VALID | (data & 0xFF)),
            (Region::Gpio, 0x008) | (Region::Uart, 0x4 | 0x8) => {
                return Err(BusError::ReadOnly { addr: base + addr })
            }
            (Region::SeuCounters, o) if o < 12 => return Err(BusError::ReadOnly { addr: base + addr }),
            _ => return Err(BusError::Unmapped { addr: base + addr }),
        }
        Ok(())
    }

    fn locate(region: Region, offset: u32) -> Result<(u32, u32), BusError> {
        let base = match region {
            Region::Gpio => GPIO_BASE,
            Region::Uart => UART_BASE,
            Region::SeuCounters => SEU_COUNTER_BASE,
            Region::Sram => unreachable!("SRAM is not a peripheral"),
        };
        if offset & 3 != 0 {
            return Err(BusError::BadAccess { addr: base + offset });
        }
        Ok((base, offset))
    }

    fn pin_of(offset: u32) -> Option<u32> {
        let pin = offset.checked_sub(0x100)? / 4;
        (pin < GPIO_PINS as u32).then_some(pin)
    }

    /// Adds this cycle's per-domain discrepancy counts, saturating.
    pub fn aggregate(&self, cells: &mut CellStore, increments: [u64; 3]) {
        for (d, inc) in increments.into_iter().enumerate() {
            if inc > 0 {
                let id = self.counters[d];
                let next = (cells.read(id) as u64 + inc).min(u32::MAX as u64);
                cells.stage(id, next as u32);
            }
        }
    }

    /// Voted counter values, indexed by [`Domain::index`].
    pub fn counters(&self, cells: &CellStore) -> [u32; 3] {
        self.counters.map(|id| cells.read(id))
    }

    pub fn counter_cell(&self, domain: Domain) -> CellId {
        self.counters[domain.index()]
    }

    pub fn gpio_dir(&self, cells: &CellStore) -> u32 {
        cells.read(self.gpio_dir)
    }

    pub fn gpio_out(&self, cells: &CellStore) -> u32 {
        cells.read(self.gpio_out)
    }

    /// Externally observable pin levels.
    pub fn pin_levels(&self, cells: &CellStore) -> u32 {
        self.pins_in(cells)
    }

    /// Sets the host-driven level of an input pin.
    pub fn set_gpio_input(&mut self, pin: u8, level: bool) {
        assert!(pin < GPIO_PINS, "pin {pin} out of range");
        if level {
            self.gpio_in |= 1 << pin;
        } else {
            self.gpio_in &= !(1 << pin);
        }
    }

    pub fn push_rx(&mut self, bytes: &[u8]) {
        self.rx_queue.extend(bytes);
    }

    pub fn tx_bytes(&self) -> &[u8] {
        &self.tx_sink
    }

    pub(crate) fn host_state(&self) -> (u32, &[u8], &VecDeque<u8>) {
        (self.gpio_in, &self.tx_sink, &self.rx_queue)
    }

    pub(crate) fn set_host_state(&mut self, gpio_in: u32, tx: Vec<u8>, rx: VecDeque<u8>) {
        self.gpio_in = gpio_in;
        self.tx_sink = tx;
        self.rx_queue = rx;
    }
}
