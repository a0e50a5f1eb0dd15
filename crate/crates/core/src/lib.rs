//! Control firmware for a GSM (SMS-driven) pet feeder, together with a
//! deterministic digital twin of its modem, ranger, dispensing gate and
//! power supply, and an experiment harness that runs desk-scale trials
//! against the twin.
//!
//! * [`domain`]: value types and validation
//! * [`firmware`]: the control loop as a pure step machine
//! * [`hal`]: peripheral ports and the AT command codec
//! * [`simenv`]: the discrete-event world around the firmware
//! * [`harness`]: trials, reports, traces and the config file format

pub mod domain;
pub mod firmware;
pub mod hal;
pub mod harness;
pub mod simenv;
