//! Desk-scale trials against the simulated feeder, their reports, and the
//! config file format.
//!
//! Every report is a fold over the trial's trace, so it can be recomputed
//! from `trace.ndjson` alone.

pub mod config;
mod report;
mod trials;

pub use report::{fold, rail_energy_mah, DispenseSummary, LatencySummary, TrialKind, TrialReport};
pub use trials::{
    expected_scheduled_feeds, power_segments, run_dispense_trial, run_endurance, run_parallel,
    run_power_profile, run_sms_trial, PowerSegment, TrialOutcome, TrialSpec,
};

use thiserror::Error;

use crate::domain::DomainError;
use crate::simenv::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] DomainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("hopper holds {available_g} g, trial needs {needed_g} g")]
    InsufficientFood { needed_g: f64, available_g: f64 },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
