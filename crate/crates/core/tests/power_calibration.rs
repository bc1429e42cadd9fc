//! Calibration closure of the power model against the published
//! per-domain measurements.

use tmrsim::power::{estimate_power, PowerModel, Scenario};
use tmrsim::tmr::Domain;

/// Published scrub-off totals, mW at 50 MHz.
const OFF_TOTALS: [f64; 3] = [14.94, 16.63, 15.37];
const LEAKAGE_MW: f64 = 0.110;

/// Independent derivation: dynamic scrub-off power over frequency.
fn oracle_slope(total_mw: f64) -> f64 {
    (total_mw - LEAKAGE_MW) * 1000.0 / 50.0
}

#[test]
fn system_slopes_match_oracle() {
    let model = PowerModel::bundled();
    let got: Vec<f64> = Scenario::ALL.iter().map(|&s| model.system_slope(s)).collect();
    for (g, t) in got.iter().zip(OFF_TOTALS) {
        assert!((g - oracle_slope(t)).abs() < 1e-9);
    }
    // Frozen.
    for (g, want) in got.iter().zip([296.6, 330.4, 305.2]) {
        assert!((g - want).abs() < 1e-9, "{g}");
    }
}

#[test]
fn scrub_adder_is_derived_from_sram_rows() {
    let model = PowerModel::bundled();
    // Every scenario's SRAM column rises by 5.14 mW with scrubbing on.
    let oracle = 5.14 * 1000.0 / 50.0;
    assert!((model.scrub_adder_uw_per_mhz - oracle).abs() < 1e-9);
    assert!((model.scrub_adder_uw_per_mhz - 102.8).abs() < 1e-9);
    assert_eq!(model.quoted_scrub_adder_uw_per_mhz, 88.0);
}

#[test]
fn domain_split_reproduces_measured_columns() {
    let model = PowerModel::bundled();
    for s in Scenario::ALL {
        let row = model.row(s).clone();
        for (scrub, measured) in [(true, row.scrub_on), (false, row.scrub_off)] {
            let e = estimate_power(&model, 50.0, s, scrub).unwrap();
            assert!((e.total_mw - measured.total).abs() < 1e-9);
            // Leakage is carried at system level, so each domain lands
            // slightly under its measured column.
            for d in [Domain::Core, Domain::Sram, Domain::Peripherals] {
                let m = measured.domains()[d.index()];
                assert!((e.domain(d) - m).abs() / m < 0.01, "{s} {d:?}");
            }
        }
    }
}

#[test]
#[ignore = "register and SRAM workload slopes sit above the quoted range; see README"]
fn every_system_slope_within_quoted_range() {
    let model = PowerModel::bundled();
    for s in Scenario::ALL {
        let slope = model.system_slope(s);
        assert!((268.0..=300.0).contains(&slope), "{s}: {slope}");
    }
}
