//! Fault-injection campaigns: upset specifications, their resolution to
//! concrete injections, the campaign runner and its report.
//!
//! A campaign is described by a TOML file:
//!
//! ```toml
//! schema_version = 1
//!
//! [program]
//! builtin = "test50"          # or: path = "prog.elf", format = "auto", base = 0
//!
//! [run]
//! max_cycles = 100000
//! freq_mhz = 50.0
//! sram_rows = 8192
//! # stimulus = "stim.txt"
//!
//! [scrubber]
//! enabled = true
//! divider = 1
//!
//! [campaign]
//! mode = "isolated"           # one run per injection; "combined" = one run
//! seed = 7                    # required whenever anything is random
//! golden = true
//! parallel = false
//!
//! [[fault]]
//! at_cycle = 40
//! phase = "edge_aligned"
//! target = { kind = "cell", name = "x5" }
//! replica = 1
//! bit = 3
//!
//! [[fault]]
//! at_cycle = 90
//! target = { kind = "random", domain = "sram" }
//!
//! [rate]                      # Poisson arrivals, expected upsets per cycle
//! core = 1e-4
//! sram = 1e-3
//! end = 50000
//!
//! [sweep]                     # every bit of every selected cell
//! cells = ["core", "peripherals"]
//! cycles = [10, 60]
//! phase = "mid_cycle"
//! ```
//!
//! Targets: `{ kind = "cell", name = ... }`, `{ kind = "element", domain,
//! element }`, `{ kind = "sram_row", row }`, `{ kind = "random", domain }`.
//! Unset `replica`/`bit` of a random target are drawn from the seed.
//!
//! Reports are JSON lines tagged by `"type"`: one `injection` line per
//! injection, one `run` line per simulation, then a `summary` line.

use crate::kernel::{
    counted_by_domain, ArchView, ConfigError, EventKind, Injection, Machine, Phase, Site, SystemConfig,
    TerminationSummary,
};
use crate::loader::{Image, ImageFormat, LoadError};
use crate::memory::SRAM_ROWS;
use crate::programs;
use crate::scrubber::ScrubberConfig;
use crate::stimulus::{Stimulus, StimulusError};
use crate::tmr::{CellId, Domain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CAMPAIGN_SCHEMA: u32 = 1;
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid campaign:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    System(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("report has no summary line")]
    MissingSummary,
    #[error("unsupported report schema_version {0}")]
    Schema(u32),
}

/// Where an upset lands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// A cell by name, e.g. `x5`, `if.pc`, `gpio.out`.
    Cell { name: String },
    /// A cell by element id, checked against its domain.
    Element { domain: Domain, element: u32 },
    SramRow { row: usize },
    /// Uniform over the domain's elements: its cells, or SRAM rows for the
    /// `sram` domain.
    Random { domain: Domain },
}

fn default_count() -> u8 {
    1
}

fn default_phase() -> Phase {
    Phase::MidCycle
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub at_cycle: u64,
    /// Ignored for SRAM rows, which have no clock edge.
    #[serde(default = "default_phase")]
    pub phase: Phase,
    pub target: Target,
    #[serde(default)]
    pub replica: Option<u8>,
    #[serde(default)]
    pub bit: Option<u8>,
    /// 1 for a single upset; 2 flips the same bit in `replica` and the next
    /// replica.
    #[serde(default = "default_count")]
    pub count: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramRef {
    pub builtin: Option<String>,
    pub path: Option<PathBuf>,
    pub format: Option<String>,
    #[serde(default)]
    pub base: u32,
    /// Overrides the image entry point.
    pub entry: Option<u32>,
}

fn default_max_cycles() -> u64 {
    1_000_000
}

fn default_freq() -> f64 {
    crate::kernel::DEFAULT_FREQ_MHZ
}

fn default_rows() -> usize {
    SRAM_ROWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_max_cycles")]
    pub max_cycles: u64,
    #[serde(default = "default_freq")]
    pub freq_mhz: f64,
    #[serde(default = "default_rows")]
    pub sram_rows: usize,
    pub stimulus: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            max_cycles: default_max_cycles(),
            freq_mhz: default_freq(),
            sram_rows: default_rows(),
            stimulus: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Each injection in its own run, compared against the golden run.
    #[default]
    Isolated,
    /// All injections in one run; upsets may accumulate.
    Combined,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    #[serde(default)]
    pub mode: Mode,
    pub seed: Option<u64>,
    #[serde(default = "yes")]
    pub golden: bool,
    #[serde(default)]
    pub parallel: bool,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            mode: Mode::Isolated,
            seed: None,
            golden: true,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePhase {
    MidCycle,
    EdgeAligned,
    /// Either, with equal probability.
    Random,
}

fn default_rate_phase() -> RatePhase {
    RatePhase::MidCycle
}

/// Poisson upset arrivals, independent per domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateModel {
    #[serde(default)]
    pub core: f64,
    #[serde(default)]
    pub sram: f64,
    #[serde(default)]
    pub peripherals: f64,
    #[serde(default)]
    pub start: u64,
    /// Exclusive; defaults to the run's `max_cycles`.
    pub end: Option<u64>,
    #[serde(default = "default_rate_phase")]
    pub phase: RatePhase,
    /// Upper bound on generated upsets.
    pub max_upsets: Option<usize>,
}

/// Exhaustive enumeration: every bit of every replica of the selected
/// storage at each listed cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Domains whose cells are swept.
    #[serde(default)]
    pub cells: Vec<Domain>,
    /// Half-open SRAM row range `[start, end)` to sweep.
    pub sram_rows: Option<[usize; 2]>,
    pub cycles: Vec<u64>,
    #[serde(default = "default_phase")]
    pub phase: Phase,
    /// Replicas to hit; all three by default.
    pub replicas: Option<Vec<u8>>,
    /// Restricts the swept bit positions.
    pub bits: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub program: ProgramRef,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub scrubber: ScrubberConfig,
    #[serde(default)]
    pub campaign: CampaignSection,
    #[serde(default)]
    pub fault: Vec<FaultSpec>,
    pub rate: Option<RateModel>,
    pub sweep: Option<Sweep>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CampaignConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CampaignError> {
        let mut cfg: CampaignConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(|source| CampaignError::Io {
            path: path.display().to_string(),
            source,
        })?;
        CampaignConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// A campaign over a bundled program with no faults.
    pub fn for_builtin(name: &str) -> Self {
        CampaignConfig {
            schema_version: CAMPAIGN_SCHEMA,
            program: ProgramRef {
                builtin: Some(name.to_string()),
                ..ProgramRef::default()
            },
            run: RunSection::default(),
            scrubber: ScrubberConfig::default(),
            campaign: CampaignSection::default(),
            fault: Vec::new(),
            rate: None,
            sweep: None,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            freq_mhz: self.run.freq_mhz,
            scrubber: self.scrubber,
            sram_rows: self.run.sram_rows,
            max_cycles: self.run.max_cycles,
            entry: self.program.entry,
            trace: false,
        }
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn image(&self) -> Result<Image, CampaignError> {
        match (&self.program.builtin, &self.program.path) {
            (Some(name), None) => programs::builtin(name)
                .ok_or_else(|| CampaignError::Invalid(vec![format!("unknown builtin program {name:?}")])),
            (None, Some(path)) => {
                let format: ImageFormat = self.program.format.as_deref().unwrap_or("auto").parse()?;
                Ok(Image::load(&self.resolve_path(path), format, self.program.base)?)
            }
            _ => Err(CampaignError::Invalid(vec![
                "[program] needs exactly one of `builtin` or `path`".into(),
            ])),
        }
    }

    pub fn stimulus(&self) -> Result<Stimulus, CampaignError> {
        match &self.run.stimulus {
            None => Ok(Stimulus::default()),
            Some(p) => {
                let path = self.resolve_path(p);
                let text = std::fs::read_to_string(&path).map_err(|source| CampaignError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Ok(Stimulus::parse(&text)?)
            }
        }
    }

    /// A machine at reset with program and stimulus loaded.
    pub fn machine(&self) -> Result<Machine, CampaignError> {
        let mut m = Machine::new(self.system_config(), &self.image()?)?;
        m.set_stimulus(self.stimulus()?);
        Ok(m)
    }

    fn needs_seed(&self) -> bool {
        self.rate.is_some()
            || self
                .fault
                .iter()
                .any(|f| matches!(f.target, Target::Random { .. }) || f.replica.is_none() || f.bit.is_none())
    }

    /// Resolves every fault to concrete injections, reporting all problems
    /// at once.
    pub fn resolve(&self, template: &Machine) -> Result<Vec<ResolvedFault>, CampaignError> {
        let mut errors = Vec::new();
        if self.schema_version != CAMPAIGN_SCHEMA {
            errors.push(format!("unsupported schema_version {}", self.schema_version));
        }
        let seed = self.campaign.seed;
        if self.needs_seed() && seed.is_none() {
            errors.push("[campaign] seed is required for random targets, unset replica/bit or [rate]".into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
        let mut out = Vec::new();

        for (i, f) in self.fault.iter().enumerate() {
            match resolve_one(f, template, &mut rng) {
                Ok(r) => out.push(r),
                Err(e) => errors.push(format!("fault #{}: {e}", i + 1)),
            }
        }
        if let Some(rate) = &self.rate {
            match rate_arrivals(rate, self.run.max_cycles, template, &mut rng) {
                Ok(mut v) => out.append(&mut v),
                Err(e) => errors.push(format!("[rate]: {e}")),
            }
        }
        if let Some(sweep) = &self.sweep {
            match sweep_faults(sweep, template) {
                Ok(mut v) => out.append(&mut v),
                Err(e) => errors.push(format!("[sweep]: {e}")),
            }
        }
        if errors.is_empty() {
            let mut probe = template.clone();
            if let Err(e) = probe.schedule(out.iter().map(|r| r.injection).collect()) {
                errors.push(e.to_string());
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(CampaignError::Invalid(errors))
        }
    }
}

/// Serializable description of an injection site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetDesc {
    Cell { domain: Domain, element: u32, name: String },
    SramRow { domain: Domain, row: usize },
}

impl TargetDesc {
    pub fn domain(&self) -> Domain {
        match self {
            TargetDesc::Cell { domain, .. } | TargetDesc::SramRow { domain, .. } => *domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedFault {
    pub injection: Injection,
    pub target: TargetDesc,
}

fn describe(site: Site, m: &Machine) -> TargetDesc {
    match site {
        Site::Cell(id) => {
            let info = m.cells().info(id);
            TargetDesc::Cell {
                domain: info.domain,
                element: id.0,
                name: info.name.clone(),
            }
        }
        Site::SramRow(row) => TargetDesc::SramRow { domain: Domain::Sram, row },
    }
}

fn cells_of(m: &Machine, domain: Domain) -> Vec<CellId> {
    m.cells().ids().filter(|&id| m.cells().info(id).domain == domain).collect()
}

fn site_width(m: &Machine, site: Site) -> u8 {
    match site {
        Site::Cell(id) => m.cells().info(id).width,
        Site::SramRow(_) => 32,
    }
}

fn random_site(domain: Domain, m: &Machine, rng: &mut ChaCha8Rng) -> Result<Site, String> {
    if domain == Domain::Sram {
        return Ok(Site::SramRow(rng.random_range(0..m.sram().rows())));
    }
    let cells = cells_of(m, domain);
    if cells.is_empty() {
        return Err(format!("domain {domain} has no cells"));
    }
    Ok(Site::Cell(cells[rng.random_range(0..cells.len())]))
}

fn resolve_one(f: &FaultSpec, m: &Machine, rng: &mut ChaCha8Rng) -> Result<ResolvedFault, String> {
    let site = match &f.target {
        Target::Cell { name } => Site::Cell(m.cells().find(name).ok_or_else(|| format!("no cell named {name:?}"))?),
        Target::Element { domain, element } => {
            if *element as usize >= m.cells().len() {
                return Err(format!("no element {element}"));
            }
            let id = CellId(*element);
            let actual = m.cells().info(id).domain;
            if actual != *domain {
                return Err(format!("element {element} is in domain {actual}, not {domain}"));
            }
            Site::Cell(id)
        }
        Target::SramRow { row } => {
            if *row >= m.sram().rows() {
                return Err(format!("row {row} outside SRAM of {} rows", m.sram().rows()));
            }
            Site::SramRow(*row)
        }
        Target::Random { domain } => random_site(*domain, m, rng)?,
    };
    let replica = match f.replica {
        Some(r) if r < 3 => r,
        Some(r) => return Err(format!("replica {r} out of range 0..3")),
        None => rng.random_range(0..3),
    };
    let width = site_width(m, site);
    let bit = match f.bit {
        Some(b) if b < width => b,
        Some(b) => return Err(format!("bit {b} outside {width}-bit target")),
        None => rng.random_range(0..width),
    };
    if !(1..=2).contains(&f.count) {
        return Err(format!("count must be 1 or 2, got {}", f.count));
    }
    Ok(ResolvedFault {
        injection: Injection {
            at_cycle: f.at_cycle,
            phase: f.phase,
            site,
            replica,
            bit,
            count: f.count,
        },
        target: describe(site, m),
    })
}

fn rate_arrivals(rate: &RateModel, max_cycles: u64, m: &Machine, rng: &mut ChaCha8Rng) -> Result<Vec<ResolvedFault>, String> {
    let end = rate.end.unwrap_or(max_cycles);
    let mut out = Vec::new();
    for domain in Domain::ALL {
        let lambda = [rate.core, rate.sram, rate.peripherals][domain.index()];
        if lambda == 0.0 {
            continue;
        }
        let exp = Exp::new(lambda).map_err(|_| format!("rate for {domain} must be positive, got {lambda}"))?;
        let mut t = rate.start as f64;
        loop {
            t += rng.sample(exp);
            if t >= end as f64 {
                break;
            }
            let site = random_site(domain, m, rng)?;
            let replica = rng.random_range(0..3u8);
            let bit = rng.random_range(0..site_width(m, site));
            let phase = match rate.phase {
                RatePhase::MidCycle => Phase::MidCycle,
                RatePhase::EdgeAligned => Phase::EdgeAligned,
                RatePhase::Random if rng.random_bool(0.5) => Phase::EdgeAligned,
                RatePhase::Random => Phase::MidCycle,
            };
            out.push(ResolvedFault {
                injection: Injection {
                    at_cycle: t as u64,
                    phase,
                    site,
                    replica,
                    bit,
                    count: 1,
                },
                target: describe(site, m),
            });
        }
    }
    out.sort_by_key(|r| r.injection.at_cycle);
    if let Some(cap) = rate.max_upsets {
        out.truncate(cap);
    }
    Ok(out)
}

fn sweep_faults(s: &Sweep, m: &Machine) -> Result<Vec<ResolvedFault>, String> {
    let replicas = s.replicas.clone().unwrap_or_else(|| vec![0, 1, 2]);
    if let Some(r) = replicas.iter().find(|&&r| r > 2) {
        return Err(format!("replica {r} out of range 0..3"));
    }
    if s.cycles.is_empty() {
        return Err("cycles must not be empty".into());
    }
    let mut sites = Vec::new();
    for &d in &s.cells {
        sites.extend(cells_of(m, d).into_iter().map(Site::Cell));
    }
    if let Some([start, end]) = s.sram_rows {
        if start > end || end > m.sram().rows() {
            return Err(format!("sram_rows [{start}, {end}) outside SRAM of {} rows", m.sram().rows()));
        }
        sites.extend((start..end).map(Site::SramRow));
    }
    let mut out = Vec::new();
    for &at_cycle in &s.cycles {
        for &site in &sites {
            let width = site_width(m, site);
            let target = describe(site, m);
            for bit in 0..width {
                if s.bits.as_ref().is_some_and(|b| !b.contains(&bit)) {
                    continue;
                }
                for &replica in &replicas {
                    out.push(ResolvedFault {
                        injection: Injection {
                            at_cycle,
                            phase: s.phase,
                            site,
                            replica,
                            bit,
                            count: 1,
                        },
                        target: target.clone(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of one injection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub index: usize,
    pub run_index: usize,
    pub target: TargetDesc,
    pub replica: u8,
    pub bit: u8,
    pub count: u8,
    pub cycle: u64,
    pub phase: Phase,
    pub applied: bool,
    pub detected: bool,
    /// Cycles from injection to the first checkpoint that found the target
    /// clean; absent unless corrected.
    pub correction_latency_cycles: Option<u64>,
    pub uncorrectable: bool,
    /// Whether this injection's run diverged from the golden run (absent
    /// without a golden run).
    pub diverged: Option<bool>,
}

/// One simulation of the campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub injections: usize,
    pub termination: TerminationSummary,
    pub cycles: u64,
    pub retired: u64,
    /// Memory-mapped SEU counters at the end of the run.
    pub counters: [u32; 3],
    /// Counted discrepancy events in the run's event log, by domain.
    pub counted_events: [u64; 3],
    /// Fields that differ from the golden run.
    pub divergence: Option<Vec<String>>,
    /// `(cycle, cumulative counted events by domain)` after each cycle that
    /// counted an event.
    pub counter_timeline: Vec<(u64, [u64; 3])>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRecord {
    pub termination: TerminationSummary,
    pub cycles: u64,
    pub retired: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub injections: usize,
    pub applied: usize,
    pub detected: usize,
    pub corrected: usize,
    pub uncorrectable: usize,
    pub runs: usize,
    pub diverged_runs: Option<usize>,
    /// Largest correction latency by domain index.
    pub max_latency: [Option<u64>; 3],
    pub mean_latency: Option<f64>,
    /// `(latency in cycles, injections)` pairs in ascending latency order.
    pub latency_histogram: Vec<(u64, u64)>,
    /// Sum of final SEU counter values over runs.
    pub counter_totals: [u64; 3],
    pub counter_crosscheck: bool,
    pub golden: Option<GoldenRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub records: Vec<InjectionRecord>,
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Injection(InjectionRecord),
    Run(RunRecord),
    Summary(Summary),
}

impl CampaignReport {
    /// JSON lines: injections, runs, summary.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        let mut push = |l: Line| {
            out.push_str(&serde_json::to_string(&l).expect("report serializes"));
            out.push('\n');
        };
        for r in &self.records {
            push(Line::Injection(r.clone()));
        }
        for r in &self.runs {
            push(Line::Run(r.clone()));
        }
        push(Line::Summary(self.summary.clone()));
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self, ReportError> {
        let (mut records, mut runs, mut summary) = (Vec::new(), Vec::new(), None);
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str(line).map_err(|source| ReportError::Json { line: i + 1, source })? {
                Line::Injection(r) => records.push(r),
                Line::Run(r) => runs.push(r),
                Line::Summary(s) => summary = Some(s),
            }
        }
        let summary: Summary = summary.ok_or(ReportError::MissingSummary)?;
        if summary.schema_version != REPORT_SCHEMA {
            return Err(ReportError::Schema(summary.schema_version));
        }
        Ok(CampaignReport { records, runs, summary })
    }
}

/// True iff every run's memory-mapped counters equal the number of counted
/// discrepancy events attributed to each domain (counters saturate).
pub fn counter_crosscheck(report: &CampaignReport) -> bool {
    report.runs.iter().all(|r| {
        (0..3).all(|d| r.counters[d] as u64 == r.counted_events[d].min(u32::MAX as u64))
    })
}

struct RunResult {
    record: RunRecord,
    outcomes: Vec<(usize, crate::kernel::InjectionOutcome)>,
}

fn timeline(m: &Machine) -> Vec<(u64, [u64; 3])> {
    let mut acc = [0u64; 3];
    let mut out: Vec<(u64, [u64; 3])> = Vec::new();
    for e in m.events() {
        if let EventKind::Discrepancy { domain, counted: true, .. } = e.kind {
            acc[domain.index()] += 1;
            match out.last_mut() {
                Some(last) if last.0 == e.cycle => last.1 = acc,
                _ => out.push((e.cycle, acc)),
            }
        }
    }
    out
}

fn finish_run(run_index: usize, m: &mut Machine, members: &[usize], golden: Option<&ArchView>) -> RunResult {
    let termination = m.run().summary();
    let view = m.arch_view();
    let divergence = golden.map(|g| view.diff(g).into_iter().map(String::from).collect());
    RunResult {
        record: RunRecord {
            run_index,
            injections: members.len(),
            termination,
            cycles: m.cycle(),
            retired: m.stats().retired,
            counters: m.seu_counters(),
            counted_events: counted_by_domain(m.events()),
            divergence,
            counter_timeline: timeline(m),
        },
        outcomes: members.iter().copied().zip(m.outcomes().iter().copied()).collect(),
    }
}

/// Runs a campaign. Results are identical with and without `parallel`.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    let template = config.machine()?;
    let faults = config.resolve(&template)?;

    let golden = config.campaign.golden.then(|| {
        let mut g = template.clone();
        let t = g.run().summary();
        (g.arch_view(), GoldenRecord { termination: t, cycles: g.cycle(), retired: g.stats().retired })
    });
    let golden_view = golden.as_ref().map(|g| &g.0);

    let results: Vec<RunResult> = match config.campaign.mode {
        Mode::Combined => {
            let mut m = template.clone();
            m.schedule(faults.iter().map(|f| f.injection).collect()).expect("validated");
            let members: Vec<usize> = (0..faults.len()).collect();
            vec![finish_run(0, &mut m, &members, golden_view)]
        }
        Mode::Isolated => {
            // Runs are visited in injection-cycle order so each can start
            // from a clone of a shared fault-free prefix.
            let mut order: Vec<usize> = (0..faults.len()).collect();
            order.sort_by_key(|&i| (faults[i].injection.at_cycle, i));
            let chunk = if config.campaign.parallel {
                order.len().div_ceil(rayon::current_num_threads() * 4).max(1)
            } else {
                order.len().max(1)
            };
            let run_chunk = |ids: &[usize]| -> Vec<RunResult> {
                let mut base = template.clone();
                ids.iter()
                    .map(|&i| {
                        let inj = faults[i].injection;
                        base.run_until(inj.at_cycle);
                        let mut m = base.clone();
                        m.schedule(vec![inj]).expect("validated");
                        finish_run(i, &mut m, &[i], golden_view)
                    })
                    .collect()
            };
            let mut all: Vec<RunResult> = if config.campaign.parallel {
                order.par_chunks(chunk).flat_map_iter(run_chunk).collect()
            } else {
                order.chunks(chunk).flat_map(run_chunk).collect()
            };
            all.sort_by_key(|r| r.record.run_index);
            all
        }
    };

    let mut records = Vec::with_capacity(faults.len());
    let mut slots: Vec<Option<InjectionRecord>> = vec![None; faults.len()];
    for r in &results {
        let diverged = r.record.divergence.as_ref().map(|d| !d.is_empty());
        for &(i, o) in &r.outcomes {
            let inj = faults[i].injection;
            slots[i] = Some(InjectionRecord {
                index: i,
                run_index: r.record.run_index,
                target: faults[i].target.clone(),
                replica: inj.replica,
                bit: inj.bit,
                count: inj.count,
                cycle: inj.at_cycle,
                phase: inj.phase,
                applied: o.applied_at.is_some(),
                detected: o.detected,
                correction_latency_cycles: o.latency(inj.at_cycle),
                uncorrectable: o.uncorrectable,
                diverged,
            });
        }
    }
    records.extend(slots.into_iter().map(|s| s.expect("every injection ran")));
    let runs: Vec<RunRecord> = results.into_iter().map(|r| r.record).collect();
    let summary = summarize(config, &records, &runs, golden.map(|g| g.1));
    let mut report = CampaignReport { records, runs, summary };
    report.summary.counter_crosscheck = counter_crosscheck(&report);
    Ok(report)
}

fn summarize(config: &CampaignConfig, records: &[InjectionRecord], runs: &[RunRecord], golden: Option<GoldenRecord>) -> Summary {
    let mut max_latency = [None; 3];
    let mut histogram = BTreeMap::new();
    let (mut sum, mut corrected) = (0u64, 0usize);
    for r in records {
        if let Some(l) = r.correction_latency_cycles {
            let slot: &mut Option<u64> = &mut max_latency[r.target.domain().index()];
            *slot = Some(slot.map_or(l, |m| m.max(l)));
            *histogram.entry(l).or_insert(0) += 1;
            sum += l;
            corrected += 1;
        }
    }
    let mut counter_totals = [0u64; 3];
    for r in runs {
        for d in 0..3 {
            counter_totals[d] += r.counters[d] as u64;
        }
    }
    Summary {
        schema_version: REPORT_SCHEMA,
        mode: config.campaign.mode,
        seed: config.campaign.seed,
        injections: records.len(),
        applied: records.iter().filter(|r| r.applied).count(),
        detected: records.iter().filter(|r| r.detected).count(),
        corrected,
        uncorrectable: records.iter().filter(|r| r.uncorrectable).count(),
        runs: runs.len(),
        diverged_runs: golden
            .as_ref()
            .map(|_| runs.iter().filter(|r| r.divergence.as_ref().is_some_and(|d| !d.is_empty())).count()),
        max_latency,
        mean_latency: (corrected > 0).then(|| sum as f64 / corrected as f64),
        latency_histogram: histogram.into_iter().collect(),
        counter_totals,
        counter_crosscheck: false,
        golden,
    }
}
