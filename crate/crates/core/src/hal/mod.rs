//! The port boundary between the firmware and its peripherals, plus the
//! modem wire codec.

mod codec;
mod init;
mod ports;

pub use codec::{
    encode_send_sms, format_incoming_sms, format_timestamp, parse_timestamp, sim_epoch, Frame,
    ModemCodec, ModemEvent, SendSmsFrames, CTRL_Z, PROMPT,
};
pub use init::{modem_init_sequence, run_modem_init, InitReport, INIT_COMMANDS, INIT_RETRIES};
pub use ports::{
    ClockPort, Credentials, EepromStorage, ModemPort, PortSet, ServoPort, StoragePort,
    UltrasonicPort,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HalError {
    #[error("SMS body is {0} characters, limit is 160")]
    BodyTooLong(usize),
    #[error("SMS body rejected: {0}")]
    InvalidBody(String),
    #[error("modem did not answer {command:?} after {attempts} attempts")]
    ModemUnresponsive { command: String, attempts: u32 },
    #[error("storage: {0}")]
    Storage(String),
}
