//! `tmrsim`: run programs on the simulated TMR system, launch fault
//! campaigns and tabulate the power model.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 simulation
//! fault, 4 cycle limit reached, 5 campaign check failed.

use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tmrsim::kernel::{Machine, SystemConfig, Termination};
use tmrsim::loader::{Image, ImageFormat};
use tmrsim::power::{estimate_energy, estimate_power, sweep, Activity, PowerModel, Scenario};
use tmrsim::programs;
use tmrsim::scrubber::ScrubberConfig;
use tmrsim::seu::{counter_crosscheck, run_campaign, CampaignConfig, CampaignReport};
use tmrsim::stimulus::Stimulus;
use tmrsim::tmr::Domain;

const EXIT_CONFIG: u8 = 2;
const EXIT_FAULT: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;
const EXIT_CHECK: u8 = 5;

#[derive(Parser)]
#[command(name = "tmrsim", version, about = "Cycle-level simulator of a TMR-protected RV32IMC system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one program to halt, fault or the cycle limit.
    Run(RunArgs),
    /// Run a fault-injection campaign described by a TOML file.
    Campaign(CampaignArgs),
    /// Tabulate the power model over a frequency range.
    Power(PowerArgs),
    /// List the built-in programs, or write one out as a raw binary.
    Programs {
        /// Write this program's raw image to `--out`.
        #[arg(long, requires = "out")]
        dump: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Program image (raw binary or ELF).
    image: Option<PathBuf>,
    /// Use a built-in program instead of a file.
    #[arg(long, conflicts_with_all = ["image", "resume"])]
    builtin: Option<String>,
    /// Continue from a snapshot instead of loading an image.
    #[arg(long, conflicts_with = "image")]
    resume: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    format: String,
    /// Load address of a raw image.
    #[arg(long, default_value_t = 0, value_parser = parse_u32)]
    base: u32,
    #[arg(long, value_parser = parse_u32)]
    entry: Option<u32>,
    #[arg(long, default_value_t = 10_000_000)]
    max_cycles: u64,
    #[arg(long, default_value_t = 50.0)]
    freq: f64,
    /// Disable the SRAM scrubber.
    #[arg(long)]
    scrub_off: bool,
    #[arg(long, default_value_t = 1)]
    scrub_divider: u32,
    #[arg(long, default_value_t = tmrsim::memory::SRAM_ROWS)]
    sram_rows: usize,
    /// Host stimulus file (GPIO levels, UART RX bytes).
    #[arg(long)]
    stimulus: Option<PathBuf>,
    /// Write captured UART TX bytes here.
    #[arg(long)]
    uart_out: Option<PathBuf>,
    /// Write the event trace (JSON lines, including retirements) here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write a JSON run report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Save a snapshot when the run reaches this cycle.
    #[arg(long, requires = "snapshot_out")]
    snapshot_at: Option<u64>,
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
}

#[derive(Args)]
struct CampaignArgs {
    config: PathBuf,
    /// Output directory for the report bundle.
    #[arg(long, default_value = "campaign-out")]
    out: PathBuf,
    /// Run injections in parallel (results are identical).
    #[arg(long)]
    parallel: bool,
    /// Exit 5 unless the counters cross-check, every applied single upset
    /// was corrected and no single-upset run diverged.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, default_value = "dhrystone")]
    scenario: String,
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    #[arg(long, default_value_t = 50.0)]
    to: f64,
    #[arg(long, default_value_t = 5.0)]
    step: f64,
    #[arg(long)]
    scrub_off: bool,
    /// Alternate calibration file.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|e| format!("{s:?}: {e}"))
}

/// A failure with its exit code.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_CONFIG, e.to_string())
    }
}

fn write_file(path: &Path, data: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure(EXIT_CONFIG, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, data).map_err(|e| Failure(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn cmd_run(a: RunArgs) -> Result<u8, Failure> {
    let mut m = if let Some(snap) = &a.resume {
        Machine::restore(&read_file(snap)?)?
    } else {
        let image = match (&a.builtin, &a.image) {
            (Some(name), _) => programs::builtin(name)
                .ok_or_else(|| Failure(EXIT_CONFIG, format!("unknown builtin {name:?}; see `tmrsim programs`")))?,
            (None, Some(path)) => Image::load(path, a.format.parse::<ImageFormat>()?, a.base)?,
            (None, None) => return Err(Failure(EXIT_CONFIG, "give an image path, --builtin or --resume".into())),
        };
        let config = SystemConfig {
            freq_mhz: a.freq,
            scrubber: ScrubberConfig {
                enabled: !a.scrub_off,
                divider: a.scrub_divider,
            },
            sram_rows: a.sram_rows,
            max_cycles: a.max_cycles,
            entry: a.entry,
            trace: a.trace.is_some(),
        };
        Machine::new(config, &image)?
    };
    if let Some(path) = &a.stimulus {
        let text = String::from_utf8_lossy(&read_file(path)?).into_owned();
        m.set_stimulus(Stimulus::parse(&text)?);
    }
    if let (Some(at), Some(out)) = (a.snapshot_at, &a.snapshot_out) {
        m.run_until(at);
        write_file(out, m.snapshot())?;
    }
    let termination = m.run();

    let stats = *m.stats();
    let cycles = m.cycle();
    let config = m.config().clone();
    let activity = Activity::from_stats(&stats, cycles);
    let energy = estimate_energy(&PowerModel::bundled(), &activity, config.freq_mhz, config.scrubber.enabled)?;
    let counters = m.seu_counters();
    let tx = m.peripherals().tx_bytes().to_vec();

    let mut s = String::new();
    let _ = writeln!(s, "termination: {}", describe(&termination));
    let _ = writeln!(s, "cycles: {cycles}");
    let _ = writeln!(s, "retired: {}", stats.retired);
    if stats.retired > 0 {
        let _ = writeln!(s, "cpi: {:.4}", cycles as f64 / stats.retired as f64);
    }
    let _ = writeln!(
        s,
        "stalls: dmem {} straddle {} branch {}",
        stats.dmem_stalls, stats.straddle_stalls, stats.branch_bubbles
    );
    let _ = writeln!(
        s,
        "seu counters: core {} sram {} peripherals {}",
        counters[0], counters[1], counters[2]
    );
    let _ = writeln!(
        s,
        "energy: {:.6e} mJ at {} MHz ({} sram cycles, {} register cycles, scrubber {})",
        energy,
        config.freq_mhz,
        activity.sram_cycles,
        activity.register_cycles,
        if config.scrubber.enabled { "on" } else { "off" }
    );
    if !tx.is_empty() {
        let _ = writeln!(s, "uart: {:?}", String::from_utf8_lossy(&tx));
    }
    print!("{s}");

    if let Some(path) = &a.uart_out {
        write_file(path, &tx)?;
    }
    if let Some(path) = &a.trace {
        let mut out = String::new();
        for e in m.events() {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        write_file(path, out)?;
    }
    if let Some(path) = &a.report {
        let report = serde_json::json!({
            "schema_version": 1,
            "termination": termination.summary(),
            "cycles": cycles,
            "stats": stats,
            "seu_counters": counters,
            "uart_tx": String::from_utf8_lossy(&tx),
            "activity": activity,
            "energy_mj": energy,
            "freq_mhz": config.freq_mhz,
            "scrubber": config.scrubber,
        });
        write_file(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(match termination {
        Termination::Halted { .. } => 0,
        Termination::Fault(_) => EXIT_FAULT,
        Termination::CycleLimit => EXIT_TIMEOUT,
    })
}

fn describe(t: &Termination) -> String {
    match t {
        Termination::Halted { kind, code, pc } => format!("halted by {kind:?} at {pc:#010x}, exit code {code}"),
        Termination::CycleLimit => "cycle limit reached".into(),
        Termination::Fault(e) => format!("fault {e}"),
    }
}

/// Whether a campaign passes `--check`.
fn check_report(r: &CampaignReport) -> Vec<String> {
    let mut problems = Vec::new();
    if !counter_crosscheck(r) {
        problems.push("SEU counters disagree with counted discrepancy events".to_string());
    }
    let mut multi = vec![false; r.runs.len()];
    for rec in &r.records {
        if rec.count > 1 {
            multi[rec.run_index] = true;
        }
    }
    for rec in &r.records {
        let single_run = !multi.get(rec.run_index).copied().unwrap_or(false);
        if rec.count == 1 && rec.applied && rec.correction_latency_cycles.is_none() {
            problems.push(format!("injection {} was not corrected", rec.index));
        }
        if single_run && rec.diverged == Some(true) {
            problems.push(format!("injection {} diverged from the golden run", rec.index));
        }
    }
    problems
}

fn summary_text(r: &CampaignReport) -> String {
    let s = &r.summary;
    let mut t = String::new();
    let _ = writeln!(t, "mode: {:?}, seed: {:?}", s.mode, s.seed);
    let _ = writeln!(t, "runs: {}", s.runs);
    let _ = writeln!(
        t,
        "injections: {} (applied {}, detected {}, corrected {}, uncorrectable {})",
        s.injections, s.applied, s.detected, s.corrected, s.uncorrectable
    );
    if let Some(d) = s.diverged_runs {
        let _ = writeln!(t, "diverged runs: {d}");
    }
    for d in Domain::ALL {
        if let Some(l) = s.max_latency[d.index()] {
            let _ = writeln!(t, "max correction latency ({d}): {l} cycles");
        }
    }
    if let Some(mean) = s.mean_latency {
        let _ = writeln!(t, "mean correction latency: {mean:.3} cycles");
    }
    let _ = writeln!(
        t,
        "counter totals: core {} sram {} peripherals {}",
        s.counter_totals[0], s.counter_totals[1], s.counter_totals[2]
    );
    let _ = writeln!(t, "counter crosscheck: {}", if s.counter_crosscheck { "pass" } else { "FAIL" });
    t
}

fn cmd_campaign(a: CampaignArgs) -> Result<u8, Failure> {
    let mut config = CampaignConfig::load(&a.config)?;
    if a.parallel {
        config.campaign.parallel = true;
    }
    let report = run_campaign(&config)?;

    let summary = summary_text(&report);
    print!("{summary}");
    write_file(&a.out.join("report.jsonl"), report.to_json_lines())?;
    write_file(&a.out.join("summary.txt"), &summary)?;
    let mut hist = String::from("latency_cycles\tcount\n");
    for (l, n) in &report.summary.latency_histogram {
        let _ = writeln!(hist, "{l}\t{n}");
    }
    write_file(&a.out.join("latency_histogram.tsv"), hist)?;
    let mut timeline = String::from("run\tcycle\tcore\tsram\tperipherals\n");
    for run in &report.runs {
        for (cycle, c) in &run.counter_timeline {
            let _ = writeln!(timeline, "{}\t{cycle}\t{}\t{}\t{}", run.run_index, c[0], c[1], c[2]);
        }
    }
    write_file(&a.out.join("counter_timeline.tsv"), timeline)?;

    if a.check {
        let problems = check_report(&report);
        if !problems.is_empty() {
            for p in problems.iter().take(20) {
                eprintln!("check: {p}");
            }
            if problems.len() > 20 {
                eprintln!("check: ... {} more", problems.len() - 20);
            }
            return Ok(EXIT_CHECK);
        }
        println!("check: pass");
    }
    Ok(0)
}

fn cmd_power(a: PowerArgs) -> Result<u8, Failure> {
    let model = match &a.calibration {
        Some(path) => PowerModel::from_toml(&String::from_utf8_lossy(&read_file(path)?))?,
        None => PowerModel::bundled(),
    };
    let scenario = Scenario::parse(&a.scenario)?;
    let scrub = !a.scrub_off;
    let rows = sweep(&model, scenario, scrub, a.from, a.to, a.step)?;
    println!("# scenario={scenario} scrub={} slope_uw_per_mhz={:.3}", if scrub { "on" } else { "off" }, {
        let p = estimate_power(&model, 1.0, scenario, scrub)?;
        (p.total_mw - p.leakage_mw) * 1000.0
    });
    println!("freq_mhz\tcore_mw\tsram_mw\tperipherals_mw\tleakage_mw\ttotal_mw");
    for p in rows {
        println!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            p.freq_mhz, p.domains_mw[0], p.domains_mw[1], p.domains_mw[2], p.leakage_mw, p.total_mw
        );
    }
    Ok(0)
}

fn cmd_programs(dump: Option<String>, out: Option<PathBuf>) -> Result<u8, Failure> {
    match (dump, out) {
        (Some(name), Some(out)) => {
            let img = programs::builtin(&name).ok_or_else(|| Failure(EXIT_CONFIG, format!("unknown builtin {name:?}")))?;
            write_file(&out, &img.segments[0].data)?;
        }
        _ => {
            for name in programs::NAMES {
                println!("{name}");
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Campaign(a) => cmd_campaign(a),
        Command::Power(a) => cmd_power(a),
        Command::Programs { dump, out } => cmd_programs(dump, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
