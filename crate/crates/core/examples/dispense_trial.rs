// Portion consistency over thirty remote FEED cycles.

use std::error::Error;

use feeder_core::harness::{run_dispense_trial, HarnessError};
use feeder_core::simenv::{SimConfig, TraceKind};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let outcome = run_dispense_trial(&SimConfig::default(), 30, 7)?;
    let grams: Vec<String> = outcome
        .records
        .iter()
        .filter(|r| r.kind == TraceKind::Dispense)
        .filter_map(|r| r.grams)
        .map(|g| format!("{g:.1}"))
        .collect();
    println!("per cycle (g): {}", grams.join(" "));
    print!("{}", outcome.summary);

    let mut nearly_empty = SimConfig::default();
    nearly_empty.hopper.initial_g = 100.0;
    match run_dispense_trial(&nearly_empty, 30, 7) {
        Err(e @ HarnessError::InsufficientFood { .. }) => println!("refused: {e}"),
        other => return Err(format!("expected a refusal, got {other:?}").into()),
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
