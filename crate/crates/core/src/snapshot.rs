//! Versioned binary snapshot of a [`Machine`] between two cycles.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8  "TMRSNAP\0"
//! version    u32 (1)
//! config     f64 freq_mhz, u8 scrub_enabled, u32 divider, u64 sram_rows,
//!            u64 max_cycles, u8 has_entry, u32 entry, u8 trace
//! cycle      u64
//! cells      u32 n, then n × (u8 width, u32 r0, u32 r1, u32 r2)
//! staged     u32 n, then n × (u32 cell, u32 value)
//! sram       u64 rows, 3 × rows × u32 (bank-major), rows × u8 observed
//! host       u32 gpio_in, u32 len + TX bytes, u32 len + RX queue bytes
//! pipeline   u8 next_bubble, 7 × u64 stats
//! counted    3 × u64
//! stimulus   u32 n, then n × (u64 cycle, u8 tag, tag 0: u8 pin u8 level,
//!            tag 1: u32 len + bytes)
//! status     u8 tag: 0 running, 1 halted (u8 kind, u32 code, u32 pc),
//!            2 cycle limit, 3 fault (u32 pc, u8 class, u32 a, u8 b)
//! ```
//!
//! The event log and any injection schedule are not part of the machine
//! state and are not saved.

use crate::isa::{HaltKind, IsaError, StepError};
use crate::kernel::{Machine, SystemConfig, Termination};
use crate::loader::Image;
use crate::memory::{BusError, Width};
use crate::pipeline::{Bubble, PipelineStats};
use crate::scrubber::ScrubberConfig;
use crate::stimulus::{Stimulus, StimulusEvent};
use crate::tmr::CellId;
use std::collections::VecDeque;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"TMRSNAP\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a snapshot (bad magic)")]
    Magic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot truncated")]
    Truncated,
    #[error("snapshot inconsistent: {0}")]
    Invalid(&'static str),
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.0.len() < n {
            return Err(SnapshotError::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn bytes(&mut self) -> Result<Vec<u8>, SnapshotError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
}

fn width_code(w: Width) -> u8 {
    match w {
        Width::Byte => 0,
        Width::Half => 1,
        Width::Word => 2,
    }
}

fn width_from(c: u8) -> Result<Width, SnapshotError> {
    [Width::Byte, Width::Half, Width::Word]
        .get(c as usize)
        .copied()
        .ok_or(SnapshotError::Invalid("access width"))
}

fn halt_code(k: HaltKind) -> u8 {
    match k {
        HaltKind::Ecall => 0,
        HaltKind::Ebreak => 1,
    }
}

fn write_fault(w: &mut Writer, e: &StepError) {
    let (pc, class, a, b) = match e {
        StepError::Isa { pc, source: IsaError::IllegalInstruction { raw } } => (*pc, 0, *raw, 0),
        StepError::Isa { pc, source: IsaError::MisalignedAccess { addr, width } } => (*pc, 1, *addr, width_code(*width)),
        StepError::Bus { pc, source: BusError::Unmapped { addr } } => (*pc, 2, *addr, 0),
        StepError::Bus { pc, source: BusError::ReadOnly { addr } } => (*pc, 3, *addr, 0),
        StepError::Bus { pc, source: BusError::BadAccess { addr } } => (*pc, 4, *addr, 0),
    };
    w.u32(pc);
    w.u8(class);
    w.u32(a);
    w.u8(b);
}

fn read_fault(r: &mut Reader) -> Result<StepError, SnapshotError> {
    let (pc, class, a, b) = (r.u32()?, r.u8()?, r.u32()?, r.u8()?);
    Ok(match class {
        0 => StepError::Isa { pc, source: IsaError::IllegalInstruction { raw: a } },
        1 => StepError::Isa { pc, source: IsaError::MisalignedAccess { addr: a, width: width_from(b)? } },
        2 => StepError::Bus { pc, source: BusError::Unmapped { addr: a } },
        3 => StepError::Bus { pc, source: BusError::ReadOnly { addr: a } },
        4 => StepError::Bus { pc, source: BusError::BadAccess { addr: a } },
        _ => return Err(SnapshotError::Invalid("fault class")),
    })
}

impl Machine {
    pub fn snapshot(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);

        let c = &self.config;
        w.f64(c.freq_mhz);
        w.u8(c.scrubber.enabled as u8);
        w.u32(c.scrubber.divider);
        w.u64(c.sram_rows as u64);
        w.u64(c.max_cycles);
        w.u8(c.entry.is_some() as u8);
        w.u32(c.entry.unwrap_or(0));
        w.u8(c.trace as u8);

        w.u64(self.cycle);

        w.u32(self.cells.len() as u32);
        for id in self.cells.ids() {
            let cell = self.cells.cell(id);
            w.u8(cell.width());
            for r in cell.replicas() {
                w.u32(r);
            }
        }
        w.u32(self.cells.staged().len() as u32);
        for &(id, v) in self.cells.staged() {
            w.u32(id.0);
            w.u32(v);
        }

        let rows = self.sram.rows();
        w.u64(rows as u64);
        for bank in self.sram.banks() {
            for &word in bank {
                w.u32(word);
            }
        }
        for row in 0..rows {
            w.u8(self.sram.is_observed(row) as u8);
        }

        let (gpio_in, tx, rx) = self.periph.host_state();
        w.u32(gpio_in);
        w.bytes(tx);
        w.bytes(&rx.iter().copied().collect::<Vec<_>>());

        w.u8(self.pipeline.next_bubble.code());
        let s = &self.pipeline.stats;
        for v in [s.retired, s.executed, s.fill, s.dmem_stalls, s.straddle_stalls, s.branch_bubbles, s.sram_cycles] {
            w.u64(v);
        }

        for v in self.counted {
            w.u64(v);
        }

        let pending: Vec<_> = self.stimulus.pending().collect();
        w.u32(pending.len() as u32);
        for (cycle, ev) in pending {
            w.u64(*cycle);
            match ev {
                StimulusEvent::Gpio { pin, level } => {
                    w.u8(0);
                    w.u8(*pin);
                    w.u8(*level as u8);
                }
                StimulusEvent::Uart(bytes) => {
                    w.u8(1);
                    w.bytes(bytes);
                }
            }
        }

        match &self.termination {
            None => w.u8(0),
            Some(Termination::Halted { kind, code, pc }) => {
                w.u8(1);
                w.u8(halt_code(*kind));
                w.u32(*code);
                w.u32(*pc);
            }
            Some(Termination::CycleLimit) => w.u8(2),
            Some(Termination::Fault(e)) => {
                w.u8(3);
                write_fault(&mut w, e);
            }
        }
        w.0
    }

    pub fn restore(bytes: &[u8]) -> Result<Machine, SnapshotError> {
        let mut r = Reader(bytes);
        if r.take(8)? != MAGIC {
            return Err(SnapshotError::Magic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        let freq_mhz = r.f64()?;
        let enabled = r.u8()? != 0;
        let divider = r.u32()?;
        let sram_rows = r.u64()? as usize;
        let max_cycles = r.u64()?;
        let has_entry = r.u8()? != 0;
        let entry = r.u32()?;
        let trace = r.u8()? != 0;
        let config = SystemConfig {
            freq_mhz,
            scrubber: ScrubberConfig { enabled, divider },
            sram_rows,
            max_cycles,
            entry: has_entry.then_some(entry),
            trace,
        };
        let mut m = Machine::new(config, &Image::default()).map_err(|_| SnapshotError::Invalid("config"))?;
        m.cycle = r.u64()?;

        let n = r.u32()? as usize;
        if n != m.cells.len() {
            return Err(SnapshotError::Invalid("cell count"));
        }
        for i in 0..n {
            let id = CellId(i as u32);
            let width = r.u8()?;
            if width != m.cells.info(id).width {
                return Err(SnapshotError::Invalid("cell width"));
            }
            let mask = m.cells.cell(id).mask();
            let reps = [r.u32()?, r.u32()?, r.u32()?];
            if reps.iter().any(|v| v & !mask != 0) {
                return Err(SnapshotError::Invalid("replica exceeds cell width"));
            }
            *m.cells.replicas_mut(id) = reps;
        }
        let n = r.u32()? as usize;
        let mut staged = Vec::with_capacity(n);
        for _ in 0..n {
            let (id, v) = (r.u32()?, r.u32()?);
            if id as usize >= m.cells.len() {
                return Err(SnapshotError::Invalid("staged cell"));
            }
            staged.push((CellId(id), v));
        }
        m.cells.restage(staged);
        m.cells.recompute_dirty();

        let rows = r.u64()? as usize;
        if rows != m.sram.rows() {
            return Err(SnapshotError::Invalid("SRAM rows"));
        }
        for b in 0..3 {
            for row in 0..rows {
                m.sram.banks_mut()[b][row] = r.u32()?;
            }
        }
        for row in 0..rows {
            m.sram.set_observed(row, r.u8()? != 0);
        }

        let gpio_in = r.u32()?;
        let tx = r.bytes()?;
        let rx: VecDeque<u8> = r.bytes()?.into();
        m.periph.set_host_state(gpio_in, tx, rx);

        m.pipeline.next_bubble = Bubble::from_code(r.u8()?).ok_or(SnapshotError::Invalid("bubble"))?;
        let mut s = [0u64; 7];
        for v in &mut s {
            *v = r.u64()?;
        }
        m.pipeline.stats = PipelineStats {
            retired: s[0],
            executed: s[1],
            fill: s[2],
            dmem_stalls: s[3],
            straddle_stalls: s[4],
            branch_bubbles: s[5],
            sram_cycles: s[6],
        };

        for d in 0..3 {
            m.counted[d] = r.u64()?;
        }

        let n = r.u32()? as usize;
        let mut events = Vec::with_capacity(n);
        for _ in 0..n {
            let cycle = r.u64()?;
            let ev = match r.u8()? {
                0 => StimulusEvent::Gpio {
                    pin: r.u8()?,
                    level: r.u8()? != 0,
                },
                1 => StimulusEvent::Uart(r.bytes()?),
                _ => return Err(SnapshotError::Invalid("stimulus tag")),
            };
            events.push((cycle, ev));
        }
        m.stimulus = Stimulus::new(events);

        m.termination = match r.u8()? {
            0 => None,
            1 => {
                let kind = match r.u8()? {
                    0 => HaltKind::Ecall,
                    1 => HaltKind::Ebreak,
                    _ => return Err(SnapshotError::Invalid("halt kind")),
                };
                Some(Termination::Halted { kind, code: r.u32()?, pc: r.u32()? })
            }
            2 => Some(Termination::CycleLimit),
            3 => Some(Termination::Fault(read_fault(&mut r)?)),
            _ => return Err(SnapshotError::Invalid("status")),
        };
        if !r.0.is_empty() {
            return Err(SnapshotError::Invalid("trailing bytes"));
        }
        Ok(m)
    }
}
