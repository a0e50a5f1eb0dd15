// A month of unattended operation with three scheduled meals a day and one
// stretch without refills that triggers the low-food alert.

use std::error::Error;

use feeder_core::harness::run_endurance;
use feeder_core::simenv::{SimConfig, TraceKind};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let outcome = run_endurance(&SimConfig::default(), 30, 42, true)?;
    print!("{}", outcome.summary);
    for r in outcome
        .records
        .iter()
        .filter(|r| r.kind == TraceKind::Alert)
    {
        println!("day {:>2} {}", r.at_ms / 86_400_000, r.detail);
    }
    let r = &outcome.report;
    assert_eq!((r.success_count, r.missed_feeds), (90, 0));
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_endurance_without_refills()?;
    run_example()
}

fn run_endurance_without_refills() -> Result<(), Box<dyn Error>> {
    let r = run_endurance(&SimConfig::default(), 30, 42, false)?.report;
    if let Some(d) = r.dispense {
        println!(
            "no refills: {} feeds, {} found the hopper empty",
            d.count, d.empty
        );
    }
    Ok(())
}
