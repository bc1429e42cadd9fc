//! Scrubbing bounds how long an SRAM upset stays resident. Two single
//! upsets in the same row and bit, far apart in time, are harmless with
//! the scrubber running and defeat the vote without it.

use std::path::Path;

use tmrsim::seu::{run_campaign, CampaignConfig, CampaignReport};

fn run(scrub: bool) -> CampaignReport {
    // Row 13 of the walker holds the `lw` of its verify loop; bit 7 is the
    // low bit of its destination register.
    let toml = format!(
        r#"
        schema_version = 1
        program = {{ builtin = "sram-walker" }}
        run = {{ max_cycles = 200000 }}
        scrubber = {{ enabled = {scrub} }}
        campaign = {{ mode = "combined" }}

        [[fault]]
        at_cycle = 100
        target = {{ kind = "sram_row", row = 13 }}
        replica = 0
        bit = 7

        [[fault]]
        at_cycle = 9000
        target = {{ kind = "sram_row", row = 13 }}
        replica = 1
        bit = 7
        "#
    );
    run_campaign(&CampaignConfig::from_toml(&toml, Path::new(".")).unwrap()).unwrap()
}

#[test]
fn scrubbing_prevents_accumulation() {
    let r = run(true);
    assert_eq!(r.summary.corrected, 2);
    assert_eq!(r.summary.diverged_runs, Some(0));
    assert!(r.summary.counter_crosscheck);
}

#[test]
fn upsets_accumulate_without_scrubbing() {
    let r = run(false);
    assert_eq!(r.summary.diverged_runs, Some(1));
    assert!(r.summary.counter_crosscheck);
}
