// Remote-command reliability: FEED commands over a lossy network, with
// success rate and round-trip latency quantiles.

use std::error::Error;

use feeder_core::harness::run_sms_trial;
use feeder_core::simenv::SimConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let outcome = run_sms_trial(&SimConfig::default(), 100, 42)?;
    print!("{}", outcome.summary);
    let r = &outcome.report;
    let l = r.latency_ms.ok_or("no confirmed round trips")?;
    assert!(l.min >= 8000 && l.max <= 12999);
    println!("{}", outcome.report_json());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
