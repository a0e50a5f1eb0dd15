//! Discrete-event digital twin around the firmware: a virtual clock, the
//! cellular network, the ranger, the hopper and gate, and the power rail.
//!
//! A [`World`] is a pure function of its [`SimConfig`], its seed and the
//! inputs injected into it. Every subsystem draws from its own seeded
//! stream, so adding draws to one model never perturbs another.

mod clock;
mod hopper;
mod modem;
mod network;
mod params;
mod power;
pub mod rng;
mod trace;
mod ultrasonic;
mod world;

pub use clock::SimClock;
pub use hopper::{HopperModel, HopperParams};
pub use modem::ModemEmulator;
pub use network::{DeliveryOutcome, GsmNetworkModel, NetworkParams};
pub use params::{DeviceParams, SimConfig};
pub use power::{integrate_rail_mah, PowerModel, PowerParams, PowerSample};
pub use trace::{parse_ndjson, Trace, TraceKind, TraceRecord};
pub use ultrasonic::{sound_speed_mps, UltrasonicModel, UltrasonicParams, ECHO_TIMEOUT_MS};
pub use world::{DeviceSnapshot, GateServo, InboxEntry, MessageId, SimEvent, World};

use thiserror::Error;

use crate::domain::{DomainError, SimTime};
use crate::firmware::FirmwareError;
use crate::hal::HalError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot schedule at {at} ms, clock is at {now} ms")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Hal(#[from] HalError),
    #[error(transparent)]
    Firmware(#[from] FirmwareError),
}
