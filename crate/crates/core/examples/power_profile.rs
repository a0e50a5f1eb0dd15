// Rail current over ten minutes with one remote FEED, printed as
// constant-current segments, plus the energy bill.

use std::error::Error;

use feeder_core::harness::run_power_profile;
use feeder_core::simenv::SimConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let cfg = SimConfig::default();
    let (outcome, segments) = run_power_profile(&cfg, 600, &[120], 1)?;
    println!("{:>10} {:>10} {:>8}", "start_ms", "end_ms", "mA");
    for s in &segments {
        println!("{:>10} {:>10} {:>8.1}", s.start_ms, s.end_ms, s.current_ma);
    }
    let r = &outcome.report;
    println!(
        "rail {:.4} mAh, battery {:.4} mAh (idle alone: {:.4} mAh)",
        r.energy_mah,
        r.battery_energy_mah,
        cfg.power.idle_ma() * 600.0 / 3600.0
    );
    println!(
        "full pack lasts {:.1} h at idle",
        cfg.power.idle_endurance_h()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
