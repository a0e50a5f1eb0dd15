//! Value types shared by the firmware, the simulator and the experiment harness.
//!
//! Everything here is an immutable value. Validation happens at construction
//! so that a `PhoneNumber`, `SmsMessage` or `FeederConfig` that exists is known
//! to satisfy its invariants.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time in milliseconds since the simulation epoch
/// (device-local midnight of day 0).
pub type SimTime = u64;

pub const MS_PER_SECOND: u64 = 1_000;
pub const MS_PER_MINUTE: u64 = 60 * MS_PER_SECOND;
pub const MS_PER_DAY: u64 = 24 * 60 * MS_PER_MINUTE;

/// Longest single-part text-mode SMS body.
pub const MAX_SMS_BODY: usize = 160;

/// Rated maximum range of the HC-SR04 class ranger, in centimeters.
pub const SENSOR_MAX_RANGE_CM: f64 = 400.0;

pub const MIN_PORTION_G: u32 = 5;
pub const MAX_PORTION_G: u32 = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("malformed phone number {0:?}")]
    MalformedNumber(String),
    #[error("invalid SMS body: {0}")]
    InvalidBody(&'static str),
    #[error("invalid time of day {0:?}")]
    InvalidTimeOfDay(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// A phone number in canonical international form: `+` followed by 8 to 15 digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhoneNumber(String);

impl PhoneNumber {
    /// Strips spaces and dashes, then validates.
    pub fn canonicalize(raw: &str) -> Result<Self, DomainError> {
        let compact: String = raw
            .trim()
            .chars()
            .filter(|c| *c != ' ' && *c != '-')
            .collect();
        let digits = compact
            .strip_prefix('+')
            .ok_or_else(|| DomainError::MalformedNumber(raw.to_string()))?;
        if !(8..=15).contains(&digits.len()) || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(DomainError::MalformedNumber(raw.to_string()));
        }
        Ok(PhoneNumber(compact))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PhoneNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PhoneNumber {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PhoneNumber::canonicalize(s)
    }
}

impl TryFrom<String> for PhoneNumber {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        PhoneNumber::canonicalize(&value)
    }
}

impl From<PhoneNumber> for String {
    fn from(value: PhoneNumber) -> Self {
        value.0
    }
}

/// Checks the single-part text-mode body rules: 1..=160 printable ASCII characters.
pub fn validate_sms_body(body: &str) -> Result<(), DomainError> {
    if body.is_empty() {
        return Err(DomainError::InvalidBody("empty"));
    }
    if body.len() > MAX_SMS_BODY {
        return Err(DomainError::InvalidBody("longer than 160 characters"));
    }
    if !body.bytes().all(|b| (0x20..=0x7e).contains(&b)) {
        return Err(DomainError::InvalidBody("non-printable character"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsMessage {
    pub from: PhoneNumber,
    pub to: PhoneNumber,
    pub body: String,
    pub sent_at: SimTime,
}

impl SmsMessage {
    pub fn new(
        from: PhoneNumber,
        to: PhoneNumber,
        body: impl Into<String>,
        sent_at: SimTime,
    ) -> Result<Self, DomainError> {
        let body = body.into();
        validate_sms_body(&body)?;
        Ok(SmsMessage {
            from,
            to,
            body,
            sent_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verb {
    Feed,
    Status,
    Reset,
}

impl Verb {
    pub fn parse(token: &str) -> Option<Verb> {
        match token.to_ascii_uppercase().as_str() {
            "FEED" => Some(Verb::Feed),
            "STATUS" => Some(Verb::Status),
            "RESET" => Some(Verb::Reset),
            _ => None,
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verb::Feed => "FEED",
            Verb::Status => "STATUS",
            Verb::Reset => "RESET",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCommand {
    pub pin: String,
    pub verb: Verb,
    /// Only ever present for [`Verb::Feed`].
    pub portion_g: Option<u32>,
}

/// True for 4 to 8 ASCII digits.
pub fn is_valid_pin(pin: &str) -> bool {
    (4..=8).contains(&pin.len()) && pin.bytes().all(|b| b.is_ascii_digit())
}

/// A device-local wall-clock time, minute resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeOfDay {
    minutes: u16,
}

impl TimeOfDay {
    pub fn new(hour: u8, minute: u8) -> Option<Self> {
        (hour < 24 && minute < 60).then(|| TimeOfDay {
            minutes: hour as u16 * 60 + minute as u16,
        })
    }

    pub fn of_sim_time(t: SimTime) -> Self {
        TimeOfDay {
            minutes: ((t % MS_PER_DAY) / MS_PER_MINUTE) as u16,
        }
    }

    pub fn hour(self) -> u8 {
        (self.minutes / 60) as u8
    }

    pub fn minute(self) -> u8 {
        (self.minutes % 60) as u8
    }

    /// Offset of this time from midnight.
    pub fn millis_into_day(self) -> u64 {
        self.minutes as u64 * MS_PER_MINUTE
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour(), self.minute())
    }
}

impl FromStr for TimeOfDay {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::InvalidTimeOfDay(s.to_string());
        let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
        if h.len() != 2 || m.len() != 2 {
            return Err(bad());
        }
        let hour: u8 = h.parse().map_err(|_| bad())?;
        let minute: u8 = m.parse().map_err(|_| bad())?;
        TimeOfDay::new(hour, minute).ok_or_else(bad)
    }
}

/// Everything provisioned into the feeder before it boots.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederConfig {
    pub pin: String,
    pub authorized: BTreeSet<PhoneNumber>,
    pub default_portion_g: u32,
    pub schedule: Vec<TimeOfDay>,
    pub food_check_period_s: u64,
    pub low_level_threshold_pct: f64,
    /// Recovery margin above the threshold before a new low-food alert may fire.
    /// Zero disables hysteresis: every low reading alerts.
    pub alert_hysteresis_pct: f64,
    pub container_height_cm: f64,
    pub sensor_deadzone_cm: f64,
    pub assumed_sound_speed_mps: f64,
    /// Gate flow calibration used to turn grams into an open duration.
    pub flow_calibration_gps: f64,
}

impl Default for FeederConfig {
    fn default() -> Self {
        let authorized = ["+8801712345678", "+8801812345678"]
            .into_iter()
            .map(|n| PhoneNumber::canonicalize(n).expect("static number"))
            .collect();
        FeederConfig {
            pin: "1234".to_string(),
            authorized,
            default_portion_g: 50,
            schedule: vec![
                TimeOfDay::new(8, 0).unwrap(),
                TimeOfDay::new(14, 0).unwrap(),
                TimeOfDay::new(20, 0).unwrap(),
            ],
            food_check_period_s: 1800,
            low_level_threshold_pct: 20.0,
            alert_hysteresis_pct: 10.0,
            container_height_cm: 30.0,
            sensor_deadzone_cm: 2.0,
            assumed_sound_speed_mps: 346.45,
            flow_calibration_gps: 25.0,
        }
    }
}

impl FeederConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |msg: String| Err(DomainError::InvalidConfig(msg));
        if !is_valid_pin(&self.pin) {
            return fail("pin must be 4 to 8 digits".into());
        }
        if !(1..=10).contains(&self.authorized.len()) {
            return fail("between 1 and 10 authorized numbers required".into());
        }
        if !(MIN_PORTION_G..=MAX_PORTION_G).contains(&self.default_portion_g) {
            return fail(format!(
                "default portion must be within {MIN_PORTION_G}..={MAX_PORTION_G} g"
            ));
        }
        if self.schedule.len() > 8 {
            return fail("at most 8 schedule entries".into());
        }
        if self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return fail("schedule must be strictly increasing".into());
        }
        if self.food_check_period_s == 0 {
            return fail("food check period must be positive".into());
        }
        if !(self.sensor_deadzone_cm > 0.0
            && self.sensor_deadzone_cm < self.container_height_cm
            && self.container_height_cm <= SENSOR_MAX_RANGE_CM)
        {
            return fail("need 0 < deadzone < container height <= 400 cm".into());
        }
        if !(self.low_level_threshold_pct > 0.0 && self.low_level_threshold_pct < 100.0) {
            return fail("low level threshold must be in (0, 100)".into());
        }
        if !(self.alert_hysteresis_pct >= 0.0 && self.alert_hysteresis_pct < 100.0) {
            return fail("alert hysteresis must be in [0, 100)".into());
        }
        if !(self.assumed_sound_speed_mps > 0.0 && self.assumed_sound_speed_mps.is_finite()) {
            return fail("assumed sound speed must be positive".into());
        }
        if !(self.flow_calibration_gps > 0.0 && self.flow_calibration_gps.is_finite()) {
            return fail("flow calibration must be positive".into());
        }
        Ok(())
    }

    pub fn is_authorized(&self, number: &PhoneNumber) -> bool {
        self.authorized.contains(number)
    }
}

/// Maps a measured distance to a fill percentage, linear between the
/// container floor (0 %) and the sensor dead zone (100 %), clamped.
pub fn level_percent(distance_cm: f64, config: &FeederConfig) -> f64 {
    let span = config.container_height_cm - config.sensor_deadzone_cm;
    let pct = 100.0 * (config.container_height_cm - distance_cm) / span;
    pct.clamp(0.0, 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoodLevelReading {
    pub distance_cm: f64,
    pub level_pct: f64,
    pub echo_time_us: f64,
    pub valid: bool,
    pub taken_at: SimTime,
}

/// An abstract 8-bit servo command and the angle it produces.
///
/// The angle is derived from the command, never stored, so the pair is
/// always consistent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServoCommandValue {
    pub pwm: u8,
}

impl ServoCommandValue {
    pub const CLOSED: ServoCommandValue = ServoCommandValue { pwm: 0 };
    pub const OPEN: ServoCommandValue = ServoCommandValue { pwm: 255 };

    pub fn new(pwm: u8) -> Self {
        ServoCommandValue { pwm }
    }

    pub fn angle_deg(self) -> f64 {
        self.pwm as f64 / 255.0 * 180.0
    }

    /// Nearest command for an angle in 0..=180 degrees.
    pub fn from_angle(angle_deg: f64) -> Self {
        let pwm = (angle_deg.clamp(0.0, 180.0) / 180.0 * 255.0).round();
        ServoCommandValue { pwm: pwm as u8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispenseResult {
    pub requested_g: f64,
    pub dispensed_g: f64,
    pub duration_ms: u64,
    pub completed_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    SmsIn,
    SmsOut,
    FeedScheduled,
    FeedRemote,
    LevelCheck,
    Alert,
    ErrorReply,
    Reset,
}

/// One entry in the device's event log. Ordered by `(at, seq)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub detail: String,
}
