use std::collections::BTreeSet;

use crate::domain::{is_valid_pin, PhoneNumber, ServoCommandValue, SimTime};

use super::HalError;

/// Byte-line channel to the GSM modem's UART.
pub trait ModemPort {
    fn write(&mut self, bytes: &[u8]);
    /// Drains whatever the modem has sent since the last read.
    fn read(&mut self) -> Vec<u8>;
}

/// Trigger a ranging; the echo time in microseconds, or `None` on timeout.
pub trait UltrasonicPort {
    fn ping(&mut self) -> Option<f64>;
}

pub trait ServoPort {
    fn set(&mut self, value: ServoCommandValue, now: SimTime);
}

/// Monotonic time plus wake scheduling.
pub trait ClockPort {
    fn now(&self) -> SimTime;
    fn wake_at(&mut self, at: SimTime);
}

pub trait StoragePort {
    fn load(&self) -> Result<Credentials, HalError>;
    fn save(&mut self, credentials: &Credentials) -> Result<(), HalError>;
}

/// Every peripheral the controller talks to.
pub struct PortSet<M, U, S, C, St> {
    pub modem: M,
    pub ultrasonic: U,
    pub servo: S,
    pub clock: C,
    pub storage: St,
}

/// The provisioned subset of the configuration that lives in EEPROM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credentials {
    pub pin: String,
    pub authorized: BTreeSet<PhoneNumber>,
}

const MAGIC: &[u8; 3] = b"PF1";

/// An in-memory EEPROM image.
///
/// Layout: `PF1`, pin length and bytes, number count, each number as length
/// and bytes, then a wrapping byte-sum checksum of everything before it.
#[derive(Debug, Clone, Default)]
pub struct EepromStorage {
    image: Vec<u8>,
}

impl EepromStorage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn image(&self) -> &[u8] {
        &self.image
    }

    pub fn from_image(image: Vec<u8>) -> Self {
        EepromStorage { image }
    }
}

fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0u8, |acc, b| acc.wrapping_add(*b))
}

fn corrupt(what: &str) -> HalError {
    HalError::Storage(format!("corrupt image: {what}"))
}

impl StoragePort for EepromStorage {
    fn load(&self) -> Result<Credentials, HalError> {
        let (body, sum) = self
            .image
            .split_last()
            .map(|(s, b)| (b, *s))
            .ok_or_else(|| HalError::Storage("empty image".into()))?;
        if checksum(body) != sum {
            return Err(corrupt("checksum"));
        }
        let rest = body.strip_prefix(MAGIC).ok_or_else(|| corrupt("magic"))?;
        let mut cursor = rest.iter().copied();
        let field = |cursor: &mut dyn Iterator<Item = u8>| -> Result<String, HalError> {
            let len = cursor.next().ok_or_else(|| corrupt("truncated"))? as usize;
            let bytes: Vec<u8> = cursor.take(len).collect();
            if bytes.len() != len {
                return Err(corrupt("truncated"));
            }
            String::from_utf8(bytes).map_err(|_| corrupt("not ascii"))
        };
        let pin = field(&mut cursor)?;
        if !is_valid_pin(&pin) {
            return Err(corrupt("pin"));
        }
        let count = cursor.next().ok_or_else(|| corrupt("truncated"))?;
        let mut authorized = BTreeSet::new();
        for _ in 0..count {
            let raw = field(&mut cursor)?;
            authorized.insert(PhoneNumber::canonicalize(&raw).map_err(|_| corrupt("number"))?);
        }
        if cursor.next().is_some() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Credentials { pin, authorized })
    }

    fn save(&mut self, credentials: &Credentials) -> Result<(), HalError> {
        if credentials.authorized.len() > u8::MAX as usize {
            return Err(HalError::Storage("too many numbers".into()));
        }
        let mut image = MAGIC.to_vec();
        image.push(credentials.pin.len() as u8);
        image.extend_from_slice(credentials.pin.as_bytes());
        image.push(credentials.authorized.len() as u8);
        for n in &credentials.authorized {
            image.push(n.as_str().len() as u8);
            image.extend_from_slice(n.as_str().as_bytes());
        }
        image.push(checksum(&image));
        self.image = image;
        Ok(())
    }
}
