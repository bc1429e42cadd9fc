//! Linear per-domain power and energy model.
//!
//! For a workload class `s` and domain `d`, dynamic power is
//! `slope[s][d] · f`; scrubbing adds `scrub_adder · f` to the SRAM domain;
//! leakage is held at system level. So `total(f) = leakage + Σ_d slope · f
//! (+ adder · f)`, exactly linear in `f`.
//!
//! Calibration takes the measured scrub-off rows at the calibration
//! frequency `f0`. The dynamic part of each row, `T_off − leakage`, is split
//! across domains in proportion to the measured domain powers:
//! `slope[s][d] = D[s][d] / T_off[s] · (T_off[s] − leakage) / f0`. This makes
//! every scrub-off total exact at `f0`. The scrubber adder is the mean SRAM
//! domain difference between the scrub-on and scrub-off rows, divided by
//! `f0`.

use crate::pipeline::PipelineStats;
use crate::tmr::Domain;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// The bundled calibration file.
pub const DEFAULT_CALIBRATION: &str = include_str!("../data/calibration.toml");
pub const CALIBRATION_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("calibration file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("calibration file: {0}")]
    Schema(String),
    #[error("unknown scenario {0:?} (expected dhrystone, register or sram)")]
    UnknownScenario(String),
    #[error("frequency must be a finite non-negative number of MHz, got {0}")]
    Frequency(f64),
}

/// Calibrated workload class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Mixed workload (Dhrystone).
    Dhrystone,
    /// Register-centred: no data memory traffic.
    Register,
    /// SRAM-centred: a data memory access every cycle.
    Sram,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Dhrystone, Scenario::Register, Scenario::Sram];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Dhrystone => "dhrystone",
            Scenario::Register => "register",
            Scenario::Sram => "sram",
        }
    }

    pub fn parse(s: &str) -> Result<Scenario, PowerError> {
        match s.to_ascii_lowercase().as_str() {
            "dhrystone" | "mixed" => Ok(Scenario::Dhrystone),
            "register" | "reg" | "register-centred" | "register-centered" => Ok(Scenario::Register),
            "sram" | "sram-centred" | "sram-centered" => Ok(Scenario::Sram),
            _ => Err(PowerError::UnknownScenario(s.to_string())),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = PowerError;
    fn from_str(s: &str) -> Result<Self, PowerError> {
        Scenario::parse(s)
    }
}

/// One measured row, mW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub core: f64,
    pub sram: f64,
    pub peripherals: f64,
    pub total: f64,
}

impl Measured {
    pub fn domains(&self) -> [f64; 3] {
        [self.core, self.sram, self.peripherals]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub name: String,
    pub class: String,
    pub scrub_on: Measured,
    pub scrub_off: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub schema_version: u32,
    pub calibration_freq_mhz: f64,
    pub leakage_uw: f64,
    pub quoted_scrub_adder_uw_per_mhz: f64,
    pub system_slope_range_uw_per_mhz: [f64; 2],
    pub scenario: Vec<CalibrationRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    /// µW/MHz by scenario then domain, scrubber excluded.
    pub slopes: [[f64; 3]; 3],
    /// µW/MHz added to the SRAM domain while scrubbing.
    pub scrub_adder_uw_per_mhz: f64,
    pub quoted_scrub_adder_uw_per_mhz: f64,
    pub leakage_uw: f64,
    pub calibration: Calibration,
}

/// Power at one operating point, mW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub freq_mhz: f64,
    pub scenario: Scenario,
    pub scrub: bool,
    /// Dynamic power by domain index (SRAM includes the scrubber adder).
    pub domains_mw: [f64; 3],
    pub leakage_mw: f64,
    pub total_mw: f64,
}

impl PowerEstimate {
    pub fn domain(&self, d: Domain) -> f64 {
        self.domains_mw[d.index()]
    }
}

impl PowerModel {
    pub fn from_toml(text: &str) -> Result<PowerModel, PowerError> {
        let cal: Calibration = toml::from_str(text)?;
        PowerModel::from_calibration(cal)
    }

    /// The model built from the bundled calibration.
    pub fn bundled() -> PowerModel {
        PowerModel::from_toml(DEFAULT_CALIBRATION).expect("bundled calibration is valid")
    }

    pub fn from_calibration(cal: Calibration) -> Result<PowerModel, PowerError> {
        if cal.schema_version != CALIBRATION_SCHEMA {
            return schema(format!("unsupported schema_version {}", cal.schema_version));
        }
        let f0 = cal.calibration_freq_mhz;
        if !(f0 > 0.0 && f0.is_finite()) {
            return schema(format!("calibration_freq_mhz must be positive, got {f0}"));
        }
        if !(cal.leakage_uw >= 0.0) {
            return schema("leakage_uw must be non-negative".into());
        }
        let leak_mw = cal.leakage_uw / 1000.0;
        let mut rows: [Option<&CalibrationRow>; 3] = [None; 3];
        for row in &cal.scenario {
            let s = Scenario::parse(&row.name).or_else(|_| schema(format!("unknown scenario {:?}", row.name)))?;
            if rows[s.index()].replace(row).is_some() {
                return schema(format!("scenario {:?} listed twice", row.name));
            }
        }
        let mut slopes = [[0.0; 3]; 3];
        let mut adder_sum = 0.0;
        for s in Scenario::ALL {
            let Some(row) = rows[s.index()] else {
                return schema(format!("missing scenario {s}"));
            };
            let off = row.scrub_off;
            if !(off.total > leak_mw) {
                return schema(format!("scenario {s}: scrub-off total must exceed leakage"));
            }
            let dynamic = (off.total - leak_mw) * 1000.0 / f0;
            for (d, p) in off.domains().into_iter().enumerate() {
                if !(p > 0.0) {
                    return schema(format!("scenario {s}: domain powers must be positive"));
                }
                slopes[s.index()][d] = p / off.total * dynamic;
            }
            adder_sum += (row.scrub_on.sram - off.sram) * 1000.0 / f0;
        }
        let adder = adder_sum / 3.0;
        if !(adder >= 0.0) {
            return schema("scrub-on SRAM power below scrub-off".into());
        }
        Ok(PowerModel {
            slopes,
            scrub_adder_uw_per_mhz: adder,
            quoted_scrub_adder_uw_per_mhz: cal.quoted_scrub_adder_uw_per_mhz,
            leakage_uw: cal.leakage_uw,
            calibration: cal,
        })
    }

    /// Sum of domain slopes, scrubber excluded, µW/MHz.
    pub fn system_slope(&self, s: Scenario) -> f64 {
        self.slopes[s.index()].iter().sum()
    }

    pub fn row(&self, s: Scenario) -> &CalibrationRow {
        self.calibration
            .scenario
            .iter()
            .find(|r| Scenario::parse(&r.name).ok() == Some(s))
            .expect("validated at construction")
    }
}

fn schema<T>(message: String) -> Result<T, PowerError> {
    Err(PowerError::Schema(message))
}

fn check_freq(freq_mhz: f64) -> Result<(), PowerError> {
    if freq_mhz >= 0.0 && freq_mhz.is_finite() {
        Ok(())
    } else {
        Err(PowerError::Frequency(freq_mhz))
    }
}

/// Power at `freq_mhz` for a calibrated scenario. `f = 0` gives leakage only.
pub fn estimate_power(model: &PowerModel, freq_mhz: f64, scenario: Scenario, scrub: bool) -> Result<PowerEstimate, PowerError> {
    check_freq(freq_mhz)?;
    let mut domains_mw = model.slopes[scenario.index()].map(|slope| slope * freq_mhz / 1000.0);
    if scrub {
        domains_mw[Domain::Sram.index()] += model.scrub_adder_uw_per_mhz * freq_mhz / 1000.0;
    }
    let leakage_mw = model.leakage_uw / 1000.0;
    Ok(PowerEstimate {
        freq_mhz,
        scenario,
        scrub,
        domains_mw,
        leakage_mw,
        total_mw: domains_mw.iter().sum::<f64>() + leakage_mw,
    })
}

/// Cycle counts per activity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Activity {
    /// Cycles with a data memory access in flight.
    pub sram_cycles: u64,
    pub register_cycles: u64,
}

impl Activity {
    pub fn from_stats(stats: &PipelineStats, total_cycles: u64) -> Activity {
        let sram = stats.sram_cycles.min(total_cycles);
        Activity {
            sram_cycles: sram,
            register_cycles: total_cycles - sram,
        }
    }

    pub fn total(&self) -> u64 {
        self.sram_cycles + self.register_cycles
    }
}

/// Energy of a run in mJ: each class's wall time at `freq_mhz` times the
/// total power of its calibrated scenario.
pub fn estimate_energy(model: &PowerModel, activity: &Activity, freq_mhz: f64, scrub: bool) -> Result<f64, PowerError> {
    if !(freq_mhz > 0.0 && freq_mhz.is_finite()) {
        return Err(PowerError::Frequency(freq_mhz));
    }
    let seconds = |cycles: u64| cycles as f64 / (freq_mhz * 1e6);
    let sram = estimate_power(model, freq_mhz, Scenario::Sram, scrub)?.total_mw;
    let reg = estimate_power(model, freq_mhz, Scenario::Register, scrub)?.total_mw;
    Ok(seconds(activity.sram_cycles) * sram + seconds(activity.register_cycles) * reg)
}

/// Rows of a frequency sweep from `start` to `end` inclusive.
pub fn sweep(model: &PowerModel, scenario: Scenario, scrub: bool, start: f64, end: f64, step: f64) -> Result<Vec<PowerEstimate>, PowerError> {
    check_freq(start)?;
    check_freq(end)?;
    if !(step > 0.0) || end < start {
        return Err(PowerError::Frequency(step));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| estimate_power(model, start + i as f64 * step, scenario, scrub))
        .collect()
}
