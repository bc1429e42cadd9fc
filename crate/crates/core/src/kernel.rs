//! Simulation kernel: the cycle loop and its fixed phase order.
//!
//! Each cycle `c` runs:
//! 1. host stimulus due at `c`;
//! 2. checkpoint: outstanding upsets whose target is clean again are
//!    recorded as corrected at `c`;
//! 3. mid-cycle upsets due at `c` (all SRAM upsets are applied here);
//! 4. voting: every cell whose replicas disagree raises one counted
//!    discrepancy event;
//! 5. peripheral tick, then the core pipeline (its SRAM accesses happen
//!    immediately, before the scrubber's);
//! 6. scrubber step;
//! 7. this cycle's counted events are added to the SEU counters;
//! 8. clock edge (feedback refresh plus staged writes), then edge-aligned
//!    upsets due at `c`, which are therefore latched.
//!
//! A mid-cycle upset is gone at the next checkpoint (latency 1); an
//! edge-aligned one survives one more edge (latency 2).

use crate::isa::{HaltKind, StepError};
use crate::loader::Image;
use crate::memory::{MemError, MemoryMap, MemorySystem, SramArray, SRAM_ROWS};
use crate::peripherals::{aggregate_discrepancies, Peripherals};
use crate::pipeline::{Pipeline, PipelineStats};
use crate::scrubber::{ScrubAction, Scrubber, ScrubberConfig};
use crate::stimulus::{Stimulus, StimulusEvent};
use crate::tmr::{CellId, CellStore, Domain, TmrError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FREQ_MHZ: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub freq_mhz: f64,
    pub scrubber: ScrubberConfig,
    pub sram_rows: usize,
    pub max_cycles: u64,
    /// Overrides the image's entry point.
    pub entry: Option<u32>,
    /// Record every retirement in the event log.
    pub trace: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            freq_mhz: DEFAULT_FREQ_MHZ,
            scrubber: ScrubberConfig::default(),
            sram_rows: SRAM_ROWS,
            max_cycles: 10_000_000,
            entry: None,
            trace: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("clock frequency must be positive, got {0} MHz")]
    Frequency(f64),
    #[error("scrub divider must be at least 1")]
    Divider,
    #[error("SRAM needs at least one row")]
    Rows,
    #[error("image segment at {addr:#x} of {len} bytes does not fit the {size}-byte SRAM")]
    ImageTooLarge { addr: u32, len: usize, size: usize },
    #[error(transparent)]
    Memory(#[from] MemError),
}

/// Upset injection phase relative to the clock edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    MidCycle,
    EdgeAligned,
}

/// Concrete storage location of an upset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Site {
    Cell(CellId),
    SramRow(usize),
}

/// A resolved upset: `count` = 1 flips one replica, `count` = 2 flips the
/// same bit in replicas `replica` and `replica + 1 (mod 3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Injection {
    pub at_cycle: u64,
    pub phase: Phase,
    pub site: Site,
    pub replica: u8,
    pub bit: u8,
    pub count: u8,
}

/// What happened to one scheduled injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InjectionOutcome {
    pub applied_at: Option<u64>,
    /// The voted value changed when the upset was applied.
    pub uncorrectable: bool,
    /// A voter observed the upset.
    pub detected: bool,
    pub corrected_at: Option<u64>,
    /// Scrubber write-backs to other rows while this (SRAM) upset was
    /// outstanding.
    pub other_writebacks: u64,
}

impl InjectionOutcome {
    /// Cycles from the scheduled cycle to the checkpoint that found the
    /// target clean, for correctable upsets.
    pub fn latency(&self, at_cycle: u64) -> Option<u64> {
        if self.uncorrectable {
            return None;
        }
        self.corrected_at.map(|c| c - at_cycle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Source {
    Cell { element: u32 },
    SramRow { row: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum EventKind {
    /// A voter asserted its discrepancy output. Uncounted events are
    /// repeat observations of an already counted SRAM row.
    Discrepancy { domain: Domain, source: Source, counted: bool },
    ScrubMismatch { row: usize },
    ScrubWriteBack { row: usize, word: u32 },
    ScrubSkipped { row: usize },
    Retire { pc: u32, rd: u8, value: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub cycle: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Halted { kind: HaltKind, code: u32, pc: u32 },
    CycleLimit,
    Fault(StepError),
}

impl Termination {
    pub fn summary(&self) -> TerminationSummary {
        match self {
            Termination::Halted { kind, code, pc } => TerminationSummary::Halted {
                kind: *kind,
                code: *code,
                pc: *pc,
            },
            Termination::CycleLimit => TerminationSummary::CycleLimit,
            Termination::Fault(e) => TerminationSummary::Fault { message: e.to_string() },
        }
    }
}

/// Serializable form of [`Termination`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TerminationSummary {
    Halted { kind: HaltKind, code: u32, pc: u32 },
    CycleLimit,
    Fault { message: String },
}

/// Architectural state compared against the golden run. Excludes the SEU
/// counters, which differ by construction in faulty runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchView {
    pub regs: [u32; 32],
    pub termination: Option<TerminationSummary>,
    pub sram: Vec<u32>,
    pub uart_tx: Vec<u8>,
    pub gpio_dir: u32,
    pub gpio_out: u32,
    pub retired: u64,
    pub cycles: u64,
}

impl ArchView {
    /// Names of the fields that differ from `other`.
    pub fn diff(&self, other: &ArchView) -> Vec<&'static str> {
        let mut d = Vec::new();
        let mut check = |name, eq: bool| {
            if !eq {
                d.push(name)
            }
        };
        check("regs", self.regs == other.regs);
        check("termination", self.termination == other.termination);
        check("sram", self.sram == other.sram);
        check("uart_tx", self.uart_tx == other.uart_tx);
        check("gpio", self.gpio_dir == other.gpio_dir && self.gpio_out == other.gpio_out);
        check("retired", self.retired == other.retired);
        check("cycles", self.cycles == other.cycles);
        d
    }
}

#[derive(Debug, Error)]
pub enum InjectError {
    #[error(transparent)]
    Cell(#[from] TmrError),
    #[error(transparent)]
    Sram(#[from] MemError),
    #[error("count must be 1 or 2, got {0}")]
    Count(u8),
    #[error("no cell with element id {0}")]
    Element(u32),
}

/// One complete simulated system.
#[derive(Debug, Clone)]
pub struct Machine {
    pub(crate) config: SystemConfig,
    pub(crate) cells: CellStore,
    pub(crate) sram: SramArray,
    pub(crate) pipeline: Pipeline,
    pub(crate) periph: Peripherals,
    pub(crate) scrubber: Scrubber,
    pub(crate) map: MemoryMap,
    pub(crate) cycle: u64,
    pub(crate) stimulus: Stimulus,
    pub(crate) injections: Vec<Injection>,
    pub(crate) outcomes: Vec<InjectionOutcome>,
    /// Indices into `injections` sorted by cycle; `next_injection` points at
    /// the first not yet applied.
    order: Vec<usize>,
    next_injection: usize,
    outstanding: Vec<usize>,
    pub(crate) events: Vec<Event>,
    pub(crate) counted: [u64; 3],
    pub(crate) termination: Option<Termination>,
}

impl Machine {
    /// Builds a machine at reset with `image` loaded into all SRAM replicas.
    pub fn new(config: SystemConfig, image: &Image) -> Result<Self, ConfigError> {
        if !(config.freq_mhz > 0.0) {
            return Err(ConfigError::Frequency(config.freq_mhz));
        }
        if config.scrubber.divider == 0 {
            return Err(ConfigError::Divider);
        }
        if config.sram_rows == 0 {
            return Err(ConfigError::Rows);
        }
        let mut sram = SramArray::new(config.sram_rows);
        for seg in &image.segments {
            if seg.addr as usize + seg.data.len() > sram.size_bytes() {
                return Err(ConfigError::ImageTooLarge {
                    addr: seg.addr,
                    len: seg.data.len(),
                    size: sram.size_bytes(),
                });
            }
            sram.load_bytes(seg.addr, &seg.data)?;
        }
        let entry = config.entry.unwrap_or(image.entry);
        let mut cells = CellStore::new();
        let pipeline = Pipeline::new(&mut cells, entry);
        let periph = Peripherals::new(&mut cells);
        let scrubber = Scrubber::new(&mut cells, config.sram_rows, config.scrubber);
        Ok(Machine {
            map: MemoryMap {
                sram_size: (config.sram_rows * 4) as u32,
            },
            config,
            cells,
            sram,
            pipeline,
            periph,
            scrubber,
            cycle: 0,
            stimulus: Stimulus::default(),
            injections: Vec::new(),
            outcomes: Vec::new(),
            order: Vec::new(),
            next_injection: 0,
            outstanding: Vec::new(),
            events: Vec::new(),
            counted: [0; 3],
            termination: None,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn cells(&self) -> &CellStore {
        &self.cells
    }

    pub fn sram(&self) -> &SramArray {
        &self.sram
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn peripherals(&self) -> &Peripherals {
        &self.periph
    }

    pub fn peripherals_mut(&mut self) -> &mut Peripherals {
        &mut self.periph
    }

    pub fn scrubber(&self) -> &Scrubber {
        &self.scrubber
    }

    pub fn stats(&self) -> &PipelineStats {
        self.pipeline.stats()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    /// Counted discrepancy events so far, by domain index.
    pub fn counted_events(&self) -> [u64; 3] {
        self.counted
    }

    /// Memory-mapped SEU counter values.
    pub fn seu_counters(&self) -> [u32; 3] {
        self.periph.counters(&self.cells)
    }

    pub fn termination(&self) -> Option<&Termination> {
        self.termination.as_ref()
    }

    pub fn set_stimulus(&mut self, stimulus: Stimulus) {
        self.stimulus = stimulus;
    }

    /// Replaces the injection schedule. Injections due before the current
    /// cycle are never applied.
    pub fn schedule(&mut self, injections: Vec<Injection>) -> Result<(), InjectError> {
        for inj in &injections {
            self.validate(inj)?;
        }
        let mut order: Vec<usize> = (0..injections.len()).collect();
        order.sort_by_key(|&i| (injections[i].at_cycle, injections[i].phase, i));
        self.outcomes = vec![InjectionOutcome::default(); injections.len()];
        self.injections = injections;
        self.next_injection = order.partition_point(|&i| self.injections[i].at_cycle < self.cycle);
        self.order = order;
        self.outstanding.clear();
        Ok(())
    }

    fn validate(&self, inj: &Injection) -> Result<(), InjectError> {
        if !(1..=2).contains(&inj.count) {
            return Err(InjectError::Count(inj.count));
        }
        if inj.replica > 2 {
            return Err(TmrError::ReplicaOutOfRange(inj.replica).into());
        }
        match inj.site {
            Site::Cell(id) => {
                if id.index() >= self.cells.len() {
                    return Err(InjectError::Element(id.0));
                }
                let width = self.cells.info(id).width;
                if inj.bit >= width {
                    return Err(TmrError::BitOutOfRange { bit: inj.bit, width }.into());
                }
            }
            Site::SramRow(row) => {
                if row >= self.sram.rows() {
                    return Err(MemError::RowOutOfRange { row, rows: self.sram.rows() }.into());
                }
                if inj.bit >= 32 {
                    return Err(MemError::BitOutOfRange(inj.bit).into());
                }
            }
        }
        Ok(())
    }

    pub fn injections(&self) -> &[Injection] {
        &self.injections
    }

    pub fn outcomes(&self) -> &[InjectionOutcome] {
        &self.outcomes
    }

    /// Architectural state for golden-run comparison.
    pub fn arch_view(&self) -> ArchView {
        ArchView {
            regs: self.pipeline.regs(&self.cells),
            termination: self.termination.as_ref().map(Termination::summary),
            sram: self.sram.voted_image(),
            uart_tx: self.periph.tx_bytes().to_vec(),
            gpio_dir: self.periph.gpio_dir(&self.cells),
            gpio_out: self.periph.gpio_out(&self.cells),
            retired: self.pipeline.stats().retired,
            cycles: self.cycle,
        }
    }

    /// Runs until halt, fault or the configured cycle limit.
    pub fn run(&mut self) -> Termination {
        while self.termination.is_none() {
            if self.cycle >= self.config.max_cycles {
                self.finish(Termination::CycleLimit);
                break;
            }
            self.step();
        }
        self.termination.clone().expect("set above")
    }

    /// Runs until `cycle` (exclusive) unless the run terminates first.
    pub fn run_until(&mut self, cycle: u64) {
        while self.termination.is_none() && self.cycle < cycle.min(self.config.max_cycles) {
            self.step();
        }
    }

    fn finish(&mut self, t: Termination) {
        self.checkpoint(self.cycle);
        self.termination = Some(t);
    }

    fn checkpoint(&mut self, cycle: u64) {
        let (cells, sram, outcomes) = (&self.cells, &self.sram, &mut self.outcomes);
        self.outstanding.retain(|&i| {
            let clean = match self.injections[i].site {
                Site::Cell(id) => cells.cell(id).is_clean(),
                Site::SramRow(row) => sram.row_clean(row),
            };
            if clean {
                outcomes[i].corrected_at = Some(cycle);
            }
            !clean
        });
    }

    fn apply(&mut self, i: usize) {
        let inj = self.injections[i];
        let replicas = [inj.replica, (inj.replica + 1) % 3];
        let replicas = &replicas[..inj.count as usize];
        let changed = match inj.site {
            Site::Cell(id) => {
                let before = self.cells.cell(id).vote().value;
                for &r in replicas {
                    self.cells.flip(id, r, inj.bit).expect("validated");
                }
                self.cells.cell(id).vote().value != before
            }
            Site::SramRow(row) => {
                let before = self.sram.read_voted(row).value;
                for &r in replicas {
                    self.sram.flip(r, row, inj.bit).expect("validated");
                }
                self.sram.read_voted(row).value != before
            }
        };
        let o = &mut self.outcomes[i];
        o.applied_at = Some(self.cycle);
        o.uncorrectable = changed;
        if !self.outstanding.contains(&i) {
            self.outstanding.push(i);
        }
    }

    fn apply_due(&mut self, edge: bool) {
        let mut k = self.next_injection;
        while k < self.order.len() {
            let inj = self.injections[self.order[k]];
            if inj.at_cycle > self.cycle {
                break;
            }
            let sram = matches!(inj.site, Site::SramRow(_));
            let edge_fault = inj.phase == Phase::EdgeAligned && !sram;
            if edge_fault == edge {
                self.apply(self.order[k]);
            }
            k += 1;
        }
        if edge {
            self.next_injection = k;
        }
    }

    fn emit(&mut self, kind: EventKind) {
        if let EventKind::Discrepancy { domain, counted, source } = kind {
            if counted {
                self.counted[domain.index()] += 1;
            }
            for &i in &self.outstanding {
                let hit = match (self.injections[i].site, source) {
                    (Site::Cell(id), Source::Cell { element }) => id.0 == element,
                    (Site::SramRow(r), Source::SramRow { row }) => r == row,
                    _ => false,
                };
                if hit {
                    self.outcomes[i].detected = true;
                }
            }
        }
        self.events.push(Event { cycle: self.cycle, kind });
    }

    fn note_writeback(&mut self, row: usize) {
        for &i in &self.outstanding {
            if let Site::SramRow(r) = self.injections[i].site {
                if r != row {
                    self.outcomes[i].other_writebacks += 1;
                }
            }
        }
    }

    /// Simulates one clock cycle. No-op once the run has terminated.
    pub fn step(&mut self) {
        if self.termination.is_some() {
            return;
        }
        let cycle = self.cycle;
        let counted_before = self.counted;

        for ev in self.stimulus.take_due(cycle) {
            match ev {
                StimulusEvent::Gpio { pin, level } => self.periph.set_gpio_input(pin, level),
                StimulusEvent::Uart(bytes) => self.periph.push_rx(&bytes),
            }
        }

        if !self.outstanding.is_empty() {
            self.checkpoint(cycle);
        }

        if self.next_injection < self.order.len() {
            self.apply_due(false);
        }

        if self.cells.is_dirty() {
            for id in self.cells.discrepancies() {
                let domain = self.cells.info(id).domain;
                self.emit(EventKind::Discrepancy {
                    domain,
                    source: Source::Cell { element: id.0 },
                    counted: true,
                });
            }
        }

        self.periph.tick(&mut self.cells);
        let mut mem = MemorySystem {
            map: self.map,
            sram: &mut self.sram,
            periph: &mut self.periph,
            cells: &mut self.cells,
        };
        let result = self.pipeline.cycle(&mut mem, cycle);
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                // Faults are precise: the older instruction in WB still
                // commits, nothing younger does.
                self.finish_cycle(counted_before);
                self.finish(Termination::Fault(e));
                return;
            }
        };
        for obs in [outcome.fetch_observation, outcome.data_observation].into_iter().flatten() {
            self.emit(EventKind::Discrepancy {
                domain: Domain::Sram,
                source: Source::SramRow { row: obs.row },
                counted: obs.first,
            });
        }
        if self.config.trace {
            if let Some(r) = outcome.retired {
                self.events.push(Event {
                    cycle,
                    kind: EventKind::Retire {
                        pc: r.pc,
                        rd: r.rd,
                        value: r.value,
                    },
                });
            }
        }

        match self.scrubber.step(&mut self.cells, &mut self.sram, outcome.core_write_row) {
            ScrubAction::Idle | ScrubAction::CleanRead { .. } => {}
            ScrubAction::Mismatch { row, first_observation, .. } => {
                self.emit(EventKind::Discrepancy {
                    domain: Domain::Sram,
                    source: Source::SramRow { row },
                    counted: first_observation,
                });
                self.emit(EventKind::ScrubMismatch { row });
            }
            ScrubAction::WriteBack { row, word } => {
                self.note_writeback(row);
                self.emit(EventKind::ScrubWriteBack { row, word });
            }
            ScrubAction::Skipped { row } => {
                self.note_writeback(row);
                self.emit(EventKind::ScrubSkipped { row });
            }
        }

        self.finish_cycle(counted_before);

        if let Some(r) = outcome.retired {
            if let Some(kind) = r.halt {
                self.finish(Termination::Halted {
                    kind,
                    code: r.value,
                    pc: r.pc,
                });
            }
        }
    }

    /// Counter aggregation, clock edge and edge-aligned upsets.
    fn finish_cycle(&mut self, counted_before: [u64; 3]) {
        let increments: [u64; 3] = std::array::from_fn(|d| self.counted[d] - counted_before[d]);
        if increments != [0; 3] {
            self.periph.aggregate(&mut self.cells, increments);
        }

        self.cells.clock_edge();
        if self.next_injection < self.order.len() {
            self.apply_due(true);
        }
        self.cycle += 1;
    }

    /// Directly flips one replica bit of a cell, outside any schedule.
    pub fn flip_cell(&mut self, id: CellId, replica: u8, bit: u8) -> Result<(), TmrError> {
        self.cells.flip(id, replica, bit)
    }

    pub fn flip_sram(&mut self, replica: u8, row: usize, bit: u8) -> Result<(), MemError> {
        self.sram.flip(replica, row, bit)
    }
}

/// Per-domain counts of counted discrepancy events in an event log.
pub fn counted_by_domain(events: &[Event]) -> [u64; 3] {
    aggregate_discrepancies(events.iter().filter_map(|e| match e.kind {
        EventKind::Discrepancy { domain, counted: true, .. } => Some(domain),
        _ => None,
    }))
}
