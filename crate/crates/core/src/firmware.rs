//! The feeder's control loop as a pure step machine.
//!
//! The firmware never touches hardware. Each entry point takes the current
//! simulation time plus one input (an SMS, a timer wake, an echo) and returns
//! the effects it wants performed as a list of [`FirmwareAction`]s. The three
//! modes of the loop map onto the entry points:
//!
//! * incoming SMS: [`DeviceState::handle_sms`]
//! * scheduled feeding and the periodic level check timer: [`DeviceState::tick`]
//! * the ranging result of a level check: [`DeviceState::handle_echo`]
//!
//! Identical `(state, input, now)` always yields identical `(state', actions)`.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::domain::{
    is_valid_pin, level_percent, DomainError, EventKind, EventRecord, FeederConfig,
    FoodLevelReading, ParsedCommand, PhoneNumber, ServoCommandValue, SimTime, SmsMessage,
    TimeOfDay, Verb, MAX_PORTION_G, MIN_PORTION_G, MS_PER_DAY, MS_PER_SECOND,
};

pub const EVENT_LOG_CAPACITY: usize = 1000;

/// Valid readings may sit this far past the container floor before they are
/// treated as bogus.
const FLOOR_TOLERANCE_CM: f64 = 5.0;

pub const REPLY_UNAUTHORIZED: &str = "ERROR: Unauthorized Number";
pub const REPLY_INVALID_PIN: &str = "ERROR: Invalid PIN";
pub const REPLY_BAD_COMMAND: &str = "ERROR: BAD COMMAND";
pub const REPLY_BUSY: &str = "ERROR: BUSY";
pub const REPLY_RESET: &str = "OK: RESET";
pub const ALERT_LOW_FOOD: &str = "ALERT: Low Food Level";
pub const LOG_SCHEDULED_FEED: &str = "Scheduled Feed";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FirmwareAction {
    SendSms {
        to: PhoneNumber,
        body: String,
    },
    ServoSet(ServoCommandValue),
    ServoSetAfter {
        delay_ms: u64,
        value: ServoCommandValue,
    },
    TriggerRanging,
    ScheduleWake(SimTime),
    Log(EventRecord),
}

#[derive(Debug, Error)]
pub enum FirmwareError {
    #[error(transparent)]
    InvalidConfig(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("command is not <PIN> <VERB> [<GRAMS>]")]
    BadFormat,
    #[error("unknown verb")]
    UnknownVerb,
    #[error("portion must be an integer between 5 and 200 grams")]
    BadPortion,
}

/// Parses `<PIN> <VERB> [<GRAMS>]`: single spaces, case-insensitive verb,
/// surrounding whitespace ignored.
pub fn parse_command(body: &str) -> Result<ParsedCommand, ParseError> {
    let tokens: Vec<&str> = body.trim().split(' ').collect();
    if !(2..=3).contains(&tokens.len()) || tokens.iter().any(|t| t.is_empty()) {
        return Err(ParseError::BadFormat);
    }
    if !is_valid_pin(tokens[0]) {
        return Err(ParseError::BadFormat);
    }
    let verb = Verb::parse(tokens[1]).ok_or(ParseError::UnknownVerb)?;
    let portion_g = match tokens.get(2) {
        None => None,
        Some(_) if verb != Verb::Feed => return Err(ParseError::BadFormat),
        Some(grams) => {
            if !grams.bytes().all(|b| b.is_ascii_digit()) {
                return Err(ParseError::BadPortion);
            }
            let g: u32 = grams.parse().map_err(|_| ParseError::BadPortion)?;
            if !(MIN_PORTION_G..=MAX_PORTION_G).contains(&g) {
                return Err(ParseError::BadPortion);
            }
            Some(g)
        }
    };
    Ok(ParsedCommand {
        pin: tokens[0].to_string(),
        verb,
        portion_g,
    })
}

/// Gate open time for a portion, rounded to the nearest 10 ms.
pub fn portion_to_open_duration(portion_g: u32, flow_rate_gps: f64) -> u64 {
    let ms = portion_g as f64 / flow_rate_gps * 1000.0;
    ((ms / 10.0).round() * 10.0) as u64
}

/// Round-trip ranging: half the echo time multiplied by the assumed speed of sound.
pub fn distance_from_echo(echo_time_us: f64, sound_speed_mps: f64) -> f64 {
    // us * m/s / 2 -> um; / 1e4 -> cm
    echo_time_us * sound_speed_mps / 2.0 / 10_000.0
}

/// First schedule instant at or after (`inclusive`) or strictly after `t`,
/// wrapping to the next day.
pub fn next_schedule_instant(
    schedule: &[TimeOfDay],
    t: SimTime,
    inclusive: bool,
) -> Option<(usize, SimTime)> {
    let first = schedule.first()?;
    let day_start = t - t % MS_PER_DAY;
    let into_day = t % MS_PER_DAY;
    schedule
        .iter()
        .enumerate()
        .find(|(_, e)| {
            let at = e.millis_into_day();
            if inclusive {
                at >= into_day
            } else {
                at > into_day
            }
        })
        .map(|(i, e)| (i, day_start + e.millis_into_day()))
        .or(Some((0, day_start + MS_PER_DAY + first.millis_into_day())))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub feeds_scheduled: u64,
    pub feeds_remote: u64,
    pub sms_rx: u64,
    pub sms_tx: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ranging {
    Idle,
    Outstanding { retried: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    config: FeederConfig,
    servo_open: bool,
    dispense_until: Option<SimTime>,
    pending_confirmation: Option<(PhoneNumber, u32)>,
    last_level: Option<FoodLevelReading>,
    alert_armed: bool,
    next_schedule_index: usize,
    next_feed_at: Option<SimTime>,
    next_check_at: SimTime,
    ranging: Ranging,
    counters: Counters,
    event_log: VecDeque<EventRecord>,
    next_seq: u64,
    battery_pct: u8,
}

impl DeviceState {
    /// Boots the controller: gate closed, feed and level-check timers armed.
    pub fn init(
        config: FeederConfig,
        now: SimTime,
    ) -> Result<(DeviceState, Vec<FirmwareAction>), FirmwareError> {
        config.validate()?;
        let next = next_schedule_instant(&config.schedule, now, true);
        let next_check_at = now + config.food_check_period_s * MS_PER_SECOND;
        let state = DeviceState {
            servo_open: false,
            dispense_until: None,
            pending_confirmation: None,
            last_level: None,
            alert_armed: true,
            next_schedule_index: next.map_or(0, |(i, _)| i),
            next_feed_at: next.map(|(_, at)| at),
            next_check_at,
            ranging: Ranging::Idle,
            counters: Counters::default(),
            event_log: VecDeque::new(),
            next_seq: 0,
            battery_pct: 100,
            config,
        };
        let mut actions = vec![FirmwareAction::ServoSet(ServoCommandValue::CLOSED)];
        if let Some(at) = state.next_feed_at {
            actions.push(FirmwareAction::ScheduleWake(at));
        }
        actions.push(FirmwareAction::ScheduleWake(next_check_at));
        Ok((state, actions))
    }

    pub fn config(&self) -> &FeederConfig {
        &self.config
    }

    pub fn servo_open(&self) -> bool {
        self.servo_open
    }

    pub fn last_level(&self) -> Option<&FoodLevelReading> {
        self.last_level.as_ref()
    }

    pub fn alert_armed(&self) -> bool {
        self.alert_armed
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn next_feed_at(&self) -> Option<SimTime> {
        self.next_feed_at
    }

    pub fn next_schedule_index(&self) -> usize {
        self.next_schedule_index
    }

    pub fn event_log(&self) -> &VecDeque<EventRecord> {
        &self.event_log
    }

    pub fn battery_pct(&self) -> u8 {
        self.battery_pct
    }

    /// Battery gauge reading, as sampled by the controller's ADC.
    pub fn observe_battery(&mut self, pct: u8) {
        self.battery_pct = pct.min(100);
    }

    /// Mode 1: an SMS read from the modem.
    ///
    /// Checks run in a fixed order: sender authorization, then PIN, then
    /// the command itself. Every failure becomes a reply SMS.
    pub fn handle_sms(&mut self, msg: &SmsMessage, now: SimTime) -> Vec<FirmwareAction> {
        let mut actions = Vec::new();
        self.counters.sms_rx += 1;
        let detail = format!("{}: {}", msg.from, msg.body);
        self.record(EventKind::SmsIn, detail, now, false, &mut actions);

        if !self.config.is_authorized(&msg.from) {
            self.counters.errors += 1;
            self.record(
                EventKind::ErrorReply,
                REPLY_UNAUTHORIZED.into(),
                now,
                false,
                &mut actions,
            );
            self.send(
                msg.from.clone(),
                REPLY_UNAUTHORIZED.into(),
                now,
                &mut actions,
            );
            return actions;
        }

        match parse_command(&msg.body) {
            Ok(cmd) if cmd.pin == self.config.pin => {
                self.execute(cmd, &msg.from, now, &mut actions)
            }
            Ok(_) => self.error_reply(&msg.from, REPLY_INVALID_PIN, now, &mut actions),
            Err(_) => {
                let first = msg.body.split_whitespace().next().unwrap_or("");
                let reply = if first == self.config.pin {
                    REPLY_BAD_COMMAND
                } else {
                    REPLY_INVALID_PIN
                };
                self.error_reply(&msg.from, reply, now, &mut actions);
            }
        }
        actions
    }

    /// Modes 2 and 3: timer expiry. Safe to call at any time; does nothing
    /// between wakes.
    pub fn tick(&mut self, now: SimTime) -> Vec<FirmwareAction> {
        let mut actions = Vec::new();

        if let Some(until) = self.dispense_until {
            if now >= until {
                self.servo_open = false;
                self.dispense_until = None;
                if let Some((to, grams)) = self.pending_confirmation.take() {
                    let body = format!("OK: FED {grams}g, LEVEL {}", self.level_text());
                    self.send(to, body, now, &mut actions);
                }
            }
        }

        // A due entry that lands inside a dispense window waits for the
        // gate-close wake. Missed entries collapse into one dispense.
        if let Some(due) = self.next_feed_at {
            if now >= due && self.dispense_until.is_none() {
                self.start_dispense(self.config.default_portion_g, now, &mut actions);
                self.counters.feeds_scheduled += 1;
                self.record(
                    EventKind::FeedScheduled,
                    LOG_SCHEDULED_FEED.into(),
                    now,
                    true,
                    &mut actions,
                );
                if let Some((idx, at)) = next_schedule_instant(&self.config.schedule, now, false) {
                    self.next_schedule_index = idx;
                    self.next_feed_at = Some(at);
                    actions.push(FirmwareAction::ScheduleWake(at));
                }
            }
        }

        if now >= self.next_check_at {
            if self.ranging == Ranging::Idle {
                self.ranging = Ranging::Outstanding { retried: false };
                actions.push(FirmwareAction::TriggerRanging);
            }
            self.next_check_at = now + self.config.food_check_period_s * MS_PER_SECOND;
            actions.push(FirmwareAction::ScheduleWake(self.next_check_at));
        }
        actions
    }

    /// Mode 3 continued: the echo time of an outstanding ranging, or `None`
    /// when the sensor timed out.
    pub fn handle_echo(&mut self, echo_time_us: Option<f64>, now: SimTime) -> Vec<FirmwareAction> {
        let mut actions = Vec::new();
        let retried = match self.ranging {
            Ranging::Idle => return actions,
            Ranging::Outstanding { retried } => retried,
        };

        let reading = echo_time_us.map(|t| self.reading_from_echo(t, now));
        match reading {
            Some(reading) if reading.valid => {
                self.ranging = Ranging::Idle;
                self.last_level = Some(reading);
                let detail = format!(
                    "LEVEL {}% ({:.1} cm)",
                    reading.level_pct.round() as i64,
                    reading.distance_cm
                );
                self.record(EventKind::LevelCheck, detail, now, true, &mut actions);
                self.evaluate_alert(reading.level_pct, now, &mut actions);
            }
            _ if !retried => {
                self.ranging = Ranging::Outstanding { retried: true };
                actions.push(FirmwareAction::TriggerRanging);
            }
            _ => {
                self.ranging = Ranging::Idle;
                self.counters.errors += 1;
                let detail = match reading {
                    Some(r) => format!("ERROR: reading out of range ({:.1} cm)", r.distance_cm),
                    None => "ERROR: echo timeout".to_string(),
                };
                self.record(EventKind::LevelCheck, detail, now, true, &mut actions);
            }
        }
        actions
    }

    /// The reply body for STATUS. Always fits one SMS.
    pub fn compose_status(&self) -> String {
        let next = self
            .next_feed_at
            .map(|at| TimeOfDay::of_sim_time(at).to_string())
            .unwrap_or_else(|| "--:--".to_string());
        format!(
            "STATUS: LEVEL {}, FEEDS S:{}/R:{}, NEXT {}, BATT {}%",
            self.level_text(),
            self.counters.feeds_scheduled,
            self.counters.feeds_remote,
            next,
            self.battery_pct
        )
    }

    fn reading_from_echo(&self, echo_time_us: f64, now: SimTime) -> FoodLevelReading {
        let cfg = &self.config;
        let distance_cm = distance_from_echo(echo_time_us, cfg.assumed_sound_speed_mps);
        let valid = distance_cm >= cfg.sensor_deadzone_cm
            && distance_cm <= cfg.container_height_cm + FLOOR_TOLERANCE_CM;
        FoodLevelReading {
            distance_cm,
            level_pct: level_percent(distance_cm, cfg),
            echo_time_us,
            valid,
            taken_at: now,
        }
    }

    fn evaluate_alert(&mut self, level_pct: f64, now: SimTime, actions: &mut Vec<FirmwareAction>) {
        let threshold = self.config.low_level_threshold_pct;
        let band = self.config.alert_hysteresis_pct;
        if level_pct < threshold {
            if self.alert_armed {
                let body = format!("{ALERT_LOW_FOOD} ({}%)", level_pct.round() as i64);
                self.record(EventKind::Alert, body.clone(), now, true, actions);
                let recipients: Vec<PhoneNumber> = self.config.authorized.iter().cloned().collect();
                for to in recipients {
                    self.send(to, body.clone(), now, actions);
                }
                if band > 0.0 {
                    self.alert_armed = false;
                }
            }
        } else if !self.alert_armed && level_pct >= threshold + band {
            self.alert_armed = true;
        }
    }

    fn execute(
        &mut self,
        cmd: ParsedCommand,
        from: &PhoneNumber,
        now: SimTime,
        actions: &mut Vec<FirmwareAction>,
    ) {
        match cmd.verb {
            Verb::Feed => {
                if self.dispense_until.is_some() {
                    self.error_reply(from, REPLY_BUSY, now, actions);
                    return;
                }
                let grams = cmd.portion_g.unwrap_or(self.config.default_portion_g);
                self.start_dispense(grams, now, actions);
                self.counters.feeds_remote += 1;
                self.pending_confirmation = Some((from.clone(), grams));
                self.record(
                    EventKind::FeedRemote,
                    format!("Remote Feed {grams}g"),
                    now,
                    true,
                    actions,
                );
            }
            Verb::Status => {
                let body = self.compose_status();
                self.send(from.clone(), body, now, actions);
            }
            Verb::Reset => {
                self.alert_armed = true;
                self.counters = Counters::default();
                self.record(
                    EventKind::Reset,
                    "Counters reset, alert re-armed".into(),
                    now,
                    true,
                    actions,
                );
                self.send(from.clone(), REPLY_RESET.into(), now, actions);
            }
        }
    }

    fn start_dispense(&mut self, grams: u32, now: SimTime, actions: &mut Vec<FirmwareAction>) {
        let duration = portion_to_open_duration(grams, self.config.flow_calibration_gps);
        self.servo_open = true;
        self.dispense_until = Some(now + duration);
        actions.push(FirmwareAction::ServoSet(ServoCommandValue::OPEN));
        actions.push(FirmwareAction::ServoSetAfter {
            delay_ms: duration,
            value: ServoCommandValue::CLOSED,
        });
        actions.push(FirmwareAction::ScheduleWake(now + duration));
    }

    fn error_reply(
        &mut self,
        to: &PhoneNumber,
        reply: &str,
        now: SimTime,
        actions: &mut Vec<FirmwareAction>,
    ) {
        self.counters.errors += 1;
        self.record(EventKind::ErrorReply, reply.to_string(), now, true, actions);
        self.send(to.clone(), reply.to_string(), now, actions);
    }

    fn send(
        &mut self,
        to: PhoneNumber,
        body: String,
        now: SimTime,
        actions: &mut Vec<FirmwareAction>,
    ) {
        self.counters.sms_tx += 1;
        self.record(
            EventKind::SmsOut,
            format!("{to}: {body}"),
            now,
            false,
            actions,
        );
        actions.push(FirmwareAction::SendSms { to, body });
    }

    /// Appends to the bounded event log; `emit` also surfaces the record as a
    /// `Log` action.
    fn record(
        &mut self,
        kind: EventKind,
        detail: String,
        now: SimTime,
        emit: bool,
        actions: &mut Vec<FirmwareAction>,
    ) {
        let record = EventRecord {
            at: now,
            seq: self.next_seq,
            kind,
            detail,
        };
        self.next_seq += 1;
        if self.event_log.len() == EVENT_LOG_CAPACITY {
            self.event_log.pop_front();
        }
        self.event_log.push_back(record.clone());
        if emit {
            actions.push(FirmwareAction::Log(record));
        }
    }

    fn level_text(&self) -> String {
        match &self.last_level {
            Some(r) => format!("{}%", r.level_pct.round() as i64),
            None => "?%".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MS_PER_MINUTE;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    const HOUR: u64 = 60 * MS_PER_MINUTE;

    fn owner() -> PhoneNumber {
        "+8801712345678".parse().unwrap()
    }

    fn device() -> PhoneNumber {
        "+8801900000001".parse().unwrap()
    }

    fn sms(from: &PhoneNumber, body: &str, at: SimTime) -> SmsMessage {
        SmsMessage::new(from.clone(), device(), body, at).unwrap()
    }

    fn boot(now: SimTime) -> DeviceState {
        DeviceState::init(FeederConfig::default(), now).unwrap().0
    }

    /// Echo time for a surface at `cm`, under the firmware's own speed assumption.
    fn echo_for(cm: f64, cfg: &FeederConfig) -> f64 {
        cm * 20_000.0 / cfg.assumed_sound_speed_mps
    }

    fn replies(actions: &[FirmwareAction]) -> Vec<(&PhoneNumber, &str)> {
        actions
            .iter()
            .filter_map(|a| match a {
                FirmwareAction::SendSms { to, body } => Some((to, body.as_str())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_command("1234 FEED 50").unwrap(),
            ParsedCommand {
                pin: "1234".into(),
                verb: Verb::Feed,
                portion_g: Some(50)
            }
        );
        assert_eq!(
            parse_command("1234 status").unwrap(),
            ParsedCommand {
                pin: "1234".into(),
                verb: Verb::Status,
                portion_g: None
            }
        );
        assert_eq!(parse_command("FEED"), Err(ParseError::BadFormat));
    }

    #[test]
    fn parse_error_paths() {
        assert_eq!(parse_command("  1234 Feed  ").unwrap().verb, Verb::Feed);
        assert_eq!(parse_command("1234  FEED"), Err(ParseError::BadFormat));
        assert_eq!(parse_command("1234 DANCE"), Err(ParseError::UnknownVerb));
        assert_eq!(parse_command("1234 FEED 4"), Err(ParseError::BadPortion));
        assert_eq!(parse_command("1234 FEED 201"), Err(ParseError::BadPortion));
        assert_eq!(parse_command("1234 FEED +50"), Err(ParseError::BadPortion));
        assert_eq!(
            parse_command("1234 FEED 99999999999"),
            Err(ParseError::BadPortion)
        );
        assert_eq!(parse_command("1234 STATUS 50"), Err(ParseError::BadFormat));
        assert_eq!(parse_command("1234 FEED 50 x"), Err(ParseError::BadFormat));
        assert_eq!(parse_command("123 FEED"), Err(ParseError::BadFormat));
        assert_eq!(parse_command("123456789 FEED"), Err(ParseError::BadFormat));
    }

    #[test]
    fn open_duration_examples() {
        assert_eq!(portion_to_open_duration(50, 25.0), 2000);
        assert_eq!(portion_to_open_duration(25, 25.0), 1000);
        assert_eq!(portion_to_open_duration(5, 25.0), 200);
        assert_eq!(portion_to_open_duration(7, 3.0), 2330);
    }

    #[test]
    fn init_schedules_next_entry() {
        let (state, actions) = DeviceState::init(FeederConfig::default(), 7 * HOUR).unwrap();
        assert!(!state.servo_open());
        assert!(state.alert_armed());
        assert_eq!(
            actions[0],
            FirmwareAction::ServoSet(ServoCommandValue::CLOSED)
        );
        assert!(actions.contains(&FirmwareAction::ScheduleWake(8 * HOUR)));
        assert!(actions.contains(&FirmwareAction::ScheduleWake(7 * HOUR + 1800 * 1000)));
    }

    #[test]
    fn init_with_empty_schedule_only_arms_level_check() {
        let cfg = FeederConfig {
            schedule: vec![],
            ..FeederConfig::default()
        };
        let (_, actions) = DeviceState::init(cfg, 7 * HOUR).unwrap();
        let wakes: Vec<_> = actions
            .iter()
            .filter(|a| matches!(a, FirmwareAction::ScheduleWake(_)))
            .collect();
        assert_eq!(
            wakes,
            vec![&FirmwareAction::ScheduleWake(7 * HOUR + 1_800_000)]
        );
    }

    #[test]
    fn init_wraps_to_tomorrow() {
        let cfg = FeederConfig {
            schedule: vec!["08:00".parse().unwrap()],
            ..FeederConfig::default()
        };
        let (state, actions) = DeviceState::init(cfg, 9 * HOUR).unwrap();
        assert_eq!(state.next_feed_at(), Some(MS_PER_DAY + 8 * HOUR));
        assert!(actions.contains(&FirmwareAction::ScheduleWake(MS_PER_DAY + 8 * HOUR)));
    }

    #[test]
    fn init_rejects_invalid_config() {
        let cfg = FeederConfig {
            pin: "12".into(),
            ..FeederConfig::default()
        };
        assert!(DeviceState::init(cfg, 0).is_err());
    }

    #[test]
    fn unauthorized_sender_gets_single_reply() {
        let mut state = boot(0);
        let stranger: PhoneNumber = "+8809999999999".parse().unwrap();
        let actions = state.handle_sms(&sms(&stranger, "1234 FEED", 10), 10);
        assert_eq!(
            actions,
            vec![FirmwareAction::SendSms {
                to: stranger,
                body: REPLY_UNAUTHORIZED.into()
            }]
        );
    }

    #[test]
    fn wrong_pin_reply() {
        let mut state = boot(0);
        let actions = state.handle_sms(&sms(&owner(), "0000 FEED", 10), 10);
        assert_eq!(replies(&actions), vec![(&owner(), REPLY_INVALID_PIN)]);
        assert!(!state.servo_open());
    }

    #[test]
    fn unparseable_bodies() {
        let mut state = boot(0);
        let a = state.handle_sms(&sms(&owner(), "1234 DANCE", 10), 10);
        assert_eq!(replies(&a), vec![(&owner(), REPLY_BAD_COMMAND)]);
        let a = state.handle_sms(&sms(&owner(), "hello there", 20), 20);
        assert_eq!(replies(&a), vec![(&owner(), REPLY_INVALID_PIN)]);
        let a = state.handle_sms(&sms(&owner(), "FEED", 30), 30);
        assert_eq!(replies(&a), vec![(&owner(), REPLY_INVALID_PIN)]);
        assert_eq!(state.counters().errors, 3);
    }

    #[test]
    fn feed_dispenses_then_confirms_on_close() {
        let mut state = boot(0);
        let now = 60_000;
        let actions = state.handle_sms(&sms(&owner(), "1234 FEED", now), now);
        assert_eq!(
            actions[0],
            FirmwareAction::ServoSet(ServoCommandValue::OPEN)
        );
        assert_eq!(
            actions[1],
            FirmwareAction::ServoSetAfter {
                delay_ms: 2000,
                value: ServoCommandValue::CLOSED
            }
        );
        assert!(replies(&actions).is_empty());
        assert!(state.servo_open());

        assert!(state.tick(now + 1999).is_empty());
        let done = state.tick(now + 2000);
        assert!(!state.servo_open());
        assert_eq!(replies(&done), vec![(&owner(), "OK: FED 50g, LEVEL ?%")]);
        assert_eq!(state.counters().feeds_remote, 1);
    }

    #[test]
    fn feed_with_portion_and_busy() {
        let mut state = boot(0);
        let a = state.handle_sms(&sms(&owner(), "1234 FEED 100", 0), 0);
        assert!(a.contains(&FirmwareAction::ServoSetAfter {
            delay_ms: 4000,
            value: ServoCommandValue::CLOSED
        }));
        let b = state.handle_sms(&sms(&owner(), "1234 FEED", 1000), 1000);
        assert_eq!(replies(&b), vec![(&owner(), REPLY_BUSY)]);
        let c = state.tick(4000);
        assert_eq!(replies(&c), vec![(&owner(), "OK: FED 100g, LEVEL ?%")]);
    }

    #[test]
    fn status_fresh_device() {
        let state = boot(7 * HOUR);
        assert_eq!(
            state.compose_status(),
            "STATUS: LEVEL ?%, FEEDS S:0/R:0, NEXT 08:00, BATT 100%"
        );
    }

    #[test]
    fn status_after_feeds() {
        let mut state = boot(7 * HOUR);
        let cfg = state.config().clone();
        // one scheduled feed at 08:00
        state.tick(8 * HOUR);
        state.tick(8 * HOUR + 2000);
        // two remote feeds
        for k in 0..2 {
            let t = 9 * HOUR + k * 60_000;
            state.handle_sms(&sms(&owner(), "1234 FEED", t), t);
            state.tick(t + 2000);
        }
        // level 62 %: distance = 30 - 0.62 * 28 = 12.64 cm
        state.ranging = Ranging::Outstanding { retried: false };
        state.handle_echo(Some(echo_for(12.64, &cfg)), 10 * HOUR);
        let status = state.compose_status();
        assert!(
            status.starts_with("STATUS: LEVEL 62%, FEEDS S:1/R:2, NEXT 14:00, BATT "),
            "{status}"
        );
        let mut via_sms = state.clone();
        let a = via_sms.handle_sms(&sms(&owner(), "1234 STATUS", 11 * HOUR), 11 * HOUR);
        assert_eq!(replies(&a), vec![(&owner(), status.as_str())]);
    }

    #[test]
    fn status_length_bound_with_huge_counters() {
        let mut state = boot(0);
        state.counters.feeds_scheduled = u64::MAX;
        state.counters.feeds_remote = u64::MAX;
        assert!(state.compose_status().len() <= 160);
    }

    #[test]
    fn reset_rearms_and_clears() {
        let mut state = boot(0);
        state.alert_armed = false;
        state.counters.feeds_remote = 5;
        let a = state.handle_sms(&sms(&owner(), "1234 reset", 10), 10);
        assert_eq!(replies(&a), vec![(&owner(), REPLY_RESET)]);
        assert!(state.alert_armed());
        assert_eq!(state.counters().feeds_remote, 0);
    }

    #[test]
    fn scheduled_feed_at_exact_entry() {
        let mut state = boot(7 * HOUR);
        let actions = state.tick(8 * HOUR);
        assert!(actions.contains(&FirmwareAction::ServoSet(ServoCommandValue::OPEN)));
        assert!(actions.iter().any(|a| matches!(
            a,
            FirmwareAction::Log(r) if r.kind == EventKind::FeedScheduled && r.detail == "Scheduled Feed"
        )));
        assert_eq!(state.next_feed_at(), Some(14 * HOUR));
        assert_eq!(state.next_schedule_index(), 1);
    }

    #[test]
    fn quiescent_between_wakes() {
        let mut state = boot(7 * HOUR);
        let before = state.clone();
        assert!(state.tick(7 * HOUR + 60_000).is_empty());
        assert_eq!(state, before);
    }

    #[test]
    fn missed_entries_collapse_to_one_dispense() {
        let mut state = boot(7 * HOUR);
        let actions = state.tick(15 * HOUR);
        let opens = actions
            .iter()
            .filter(|a| **a == FirmwareAction::ServoSet(ServoCommandValue::OPEN))
            .count();
        assert_eq!(opens, 1);
        assert_eq!(state.counters().feeds_scheduled, 1);
        assert_eq!(state.next_feed_at(), Some(20 * HOUR));
    }

    #[test]
    fn scheduled_feed_waits_for_remote_dispense() {
        let mut state = boot(7 * HOUR);
        let t = 8 * HOUR - 1000;
        state.handle_sms(&sms(&owner(), "1234 FEED", t), t);
        let during = state.tick(8 * HOUR);
        assert!(!during.contains(&FirmwareAction::ServoSet(ServoCommandValue::OPEN)));
        assert_eq!(state.counters().feeds_scheduled, 0);
        let a = state.tick(t + 2000);
        assert!(a.contains(&FirmwareAction::ServoSet(ServoCommandValue::OPEN)));
        assert_eq!(state.counters().feeds_scheduled, 1);
    }

    #[test]
    fn echo_at_twenty_cm() {
        let mut state = boot(0);
        state.tick(1_800_000);
        let actions = state.handle_echo(Some(1155.3), 1_800_010);
        let r = state.last_level().unwrap();
        assert!((r.distance_cm - 20.0).abs() < 0.1, "{}", r.distance_cm);
        assert!((r.level_pct - 35.7).abs() < 0.1, "{}", r.level_pct);
        assert!(replies(&actions).is_empty());

        // same echo with the 346.3 m/s assumption
        let cfg = FeederConfig {
            assumed_sound_speed_mps: 346.3,
            ..FeederConfig::default()
        };
        let mut state = DeviceState::init(cfg, 0).unwrap().0;
        state.tick(1_800_000);
        state.handle_echo(Some(1155.3), 1_800_010);
        assert!((state.last_level().unwrap().distance_cm - 20.0).abs() < 0.1);
    }

    #[test]
    fn low_reading_broadcasts_once() {
        let mut state = boot(0);
        let cfg = state.config().clone();
        state.tick(1_800_000);
        let actions = state.handle_echo(Some(echo_for(28.0, &cfg)), 1_800_010);
        let level = state.last_level().unwrap().level_pct;
        assert!((level - 7.142857).abs() < 1e-3);
        let sent = replies(&actions);
        let recipients: BTreeSet<_> = sent.iter().map(|(to, _)| (*to).clone()).collect();
        assert_eq!(recipients, cfg.authorized);
        assert!(sent.iter().all(|(_, b)| *b == "ALERT: Low Food Level (7%)"));
        assert!(!state.alert_armed());

        state.tick(3_600_000);
        let again = state.handle_echo(Some(echo_for(28.0, &cfg)), 3_600_010);
        assert!(replies(&again).is_empty());
    }

    #[test]
    fn hysteresis_rearm_threshold() {
        let mut state = boot(0);
        let cfg = state.config().clone();
        let mut t = 0;
        let mut check = |state: &mut DeviceState, level: f64| {
            t += 1_800_000;
            state.tick(t);
            let d = 30.0 - level / 100.0 * 28.0;
            replies(&state.handle_echo(Some(echo_for(d, &cfg)), t)).len()
        };
        assert_eq!(check(&mut state, 10.0), 2);
        assert_eq!(check(&mut state, 25.0), 0);
        assert!(!state.alert_armed());
        assert_eq!(check(&mut state, 10.0), 0);
        assert_eq!(check(&mut state, 30.5), 0);
        assert!(state.alert_armed());
        assert_eq!(check(&mut state, 10.0), 2);
    }

    #[test]
    fn zero_hysteresis_alerts_every_low_reading() {
        let cfg = FeederConfig {
            alert_hysteresis_pct: 0.0,
            ..FeederConfig::default()
        };
        let mut state = DeviceState::init(cfg.clone(), 0).unwrap().0;
        for k in 1..=3u64 {
            state.tick(k * 1_800_000);
            let a = state.handle_echo(Some(echo_for(29.0, &cfg)), k * 1_800_000);
            assert_eq!(replies(&a).len(), 2);
        }
    }

    #[test]
    fn echo_timeout_retries_once_then_logs() {
        let mut state = boot(0);
        state.tick(1_800_000);
        let a = state.handle_echo(None, 1_800_038);
        assert_eq!(a, vec![FirmwareAction::TriggerRanging]);
        let b = state.handle_echo(None, 1_800_076);
        assert!(matches!(
            &b[..],
            [FirmwareAction::Log(r)] if r.kind == EventKind::LevelCheck && r.detail.starts_with("ERROR")
        ));
        assert_eq!(state.counters().errors, 1);
        // no outstanding ranging: further echoes are ignored
        assert!(state.handle_echo(Some(1000.0), 1_800_100).is_empty());
    }

    #[test]
    fn event_log_is_bounded() {
        let mut state = boot(0);
        for k in 0..1200u64 {
            state.handle_sms(&sms(&owner(), "1234 STATUS", k), k);
        }
        assert_eq!(state.event_log().len(), EVENT_LOG_CAPACITY);
        let log = state.event_log();
        assert!(log
            .iter()
            .zip(log.iter().skip(1))
            .all(|(a, b)| a.seq < b.seq));
    }

    #[test]
    fn next_instant_wraps() {
        let sched: Vec<TimeOfDay> = vec!["08:00".parse().unwrap(), "20:00".parse().unwrap()];
        assert_eq!(
            next_schedule_instant(&sched, 8 * HOUR, true),
            Some((0, 8 * HOUR))
        );
        assert_eq!(
            next_schedule_instant(&sched, 8 * HOUR, false),
            Some((1, 20 * HOUR))
        );
        assert_eq!(
            next_schedule_instant(&sched, 21 * HOUR, false),
            Some((0, MS_PER_DAY + 8 * HOUR))
        );
        assert_eq!(next_schedule_instant(&[], 0, true), None);
    }

    /// Drives the firmware through its own wake requests, answering every
    /// ranging with the given echo.
    fn run_wakes(
        state: &mut DeviceState,
        mut wakes: Vec<SimTime>,
        until: SimTime,
        echo: f64,
    ) -> Vec<FirmwareAction> {
        let mut all = Vec::new();
        while let Some(t) = wakes.iter().copied().filter(|t| *t <= until).min() {
            wakes.retain(|w| *w != t);
            let mut pending = state.tick(t);
            while let Some(a) = pending.pop() {
                match &a {
                    FirmwareAction::ScheduleWake(at) => wakes.push(*at),
                    FirmwareAction::TriggerRanging => {
                        pending.extend(state.handle_echo(Some(echo), t))
                    }
                    _ => {}
                }
                all.push(a);
            }
        }
        all
    }

    #[test]
    fn schedule_liveness_against_minute_enumeration() {
        let start = 5 * HOUR + 30 * MS_PER_MINUTE;
        let until = start + 30 * MS_PER_DAY;
        let (mut state, init) = DeviceState::init(FeederConfig::default(), start).unwrap();
        let wakes: Vec<_> = init
            .iter()
            .filter_map(|a| match a {
                FirmwareAction::ScheduleWake(t) => Some(*t),
                _ => None,
            })
            .collect();
        let cfg = state.config().clone();
        let actions = run_wakes(&mut state, wakes, until, echo_for(10.0, &cfg));

        // oracle: walk every minute and count schedule matches
        let mut expected = 0;
        let mut m = start / MS_PER_MINUTE;
        while m * MS_PER_MINUTE <= until {
            if cfg
                .schedule
                .contains(&TimeOfDay::of_sim_time(m * MS_PER_MINUTE))
            {
                expected += 1;
            }
            m += 1;
        }
        let logged = actions
            .iter()
            .filter(|a| matches!(a, FirmwareAction::Log(r) if r.kind == EventKind::FeedScheduled))
            .count();
        assert_eq!(expected, 90);
        assert_eq!(logged, expected);
    }

    #[derive(Debug, Clone)]
    enum Input {
        Sms(u8, String),
        Tick(u32),
        Echo(Option<f64>),
    }

    fn input_strategy() -> impl Strategy<Value = Input> {
        prop_oneof![
            (
                0u8..3,
                prop_oneof![
                    Just("1234 FEED".to_string()),
                    Just("1234 FEED 20".to_string()),
                    Just("1234 STATUS".to_string()),
                    Just("1234 RESET".to_string()),
                    Just("0000 FEED".to_string()),
                    "[ -~]{1,30}",
                ]
            )
                .prop_map(|(who, body)| Input::Sms(who, body)),
            (0u32..4_000_000).prop_map(Input::Tick),
            proptest::option::of(0.0f64..2500.0).prop_map(Input::Echo),
        ]
    }

    fn apply(state: &mut DeviceState, input: &Input, now: SimTime) -> Vec<FirmwareAction> {
        let senders = ["+8801712345678", "+8801812345678", "+8809999999999"];
        match input {
            Input::Sms(who, body) => {
                let from: PhoneNumber = senders[*who as usize].parse().unwrap();
                state.handle_sms(&sms(&from, body, now), now)
            }
            Input::Tick(_) => state.tick(now),
            Input::Echo(e) => state.handle_echo(*e, now),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn unauthorized_only_ever_get_the_error(body in "[ -~]{1,160}") {
            let mut state = boot(0);
            let stranger: PhoneNumber = "+8809999999999".parse().unwrap();
            let actions = state.handle_sms(&sms(&stranger, &body, 5), 5);
            prop_assert_eq!(actions, vec![FirmwareAction::SendSms {
                to: stranger,
                body: REPLY_UNAUTHORIZED.into(),
            }]);
        }

        #[test]
        fn steps_are_deterministic(inputs in proptest::collection::vec(input_strategy(), 1..40)) {
            let mut a = boot(0);
            let mut b = boot(0);
            let mut now = 0;
            for input in &inputs {
                if let Input::Tick(dt) = input { now += *dt as u64; }
                let x = apply(&mut a, input, now);
                let y = apply(&mut b, input, now);
                prop_assert_eq!(x, y);
                prop_assert_eq!(&a, &b);
            }
        }

        #[test]
        fn servo_choreography_is_safe(inputs in proptest::collection::vec(input_strategy(), 1..60)) {
            let mut state = boot(0);
            let mut now = 0;
            for input in &inputs {
                if let Input::Tick(dt) = input { now += *dt as u64; }
                let actions = apply(&mut state, input, now);
                let opens: Vec<usize> = actions.iter().enumerate()
                    .filter(|(_, a)| **a == FirmwareAction::ServoSet(ServoCommandValue::OPEN))
                    .map(|(i, _)| i).collect();
                let closes: Vec<usize> = actions.iter().enumerate()
                    .filter(|(_, a)| matches!(a, FirmwareAction::ServoSetAfter { value, .. } if *value == ServoCommandValue::CLOSED))
                    .map(|(i, _)| i).collect();
                prop_assert!(opens.len() <= 1);
                prop_assert_eq!(opens.len(), closes.len());
                if let (Some(o), Some(c)) = (opens.first(), closes.first()) {
                    prop_assert!(o < c);
                }
                for a in &actions {
                    if let FirmwareAction::ServoSet(v) | FirmwareAction::ServoSetAfter { value: v, .. } = a {
                        prop_assert!((v.angle_deg() - v.pwm as f64 / 255.0 * 180.0).abs() < 1e-9);
                    }
                }
                prop_assert_eq!(state.servo_open(), state.dispense_until.is_some());
            }
        }

        #[test]
        fn alerts_never_flood(levels in proptest::collection::vec(0.0f64..100.0, 1..80)) {
            let mut state = boot(0);
            let cfg = state.config().clone();
            let recovery = cfg.low_level_threshold_pct + cfg.alert_hysteresis_pct;
            let mut recovered_since_alert = true;
            for (k, level) in levels.iter().enumerate() {
                let t = (k as u64 + 1) * 1_800_000;
                state.tick(t);
                let d = 30.0 - level / 100.0 * 28.0;
                let actions = state.handle_echo(Some(echo_for(d, &cfg)), t);
                let reading = state.last_level().unwrap().level_pct;
                let alerted = actions.iter().any(|a| matches!(a, FirmwareAction::Log(r) if r.kind == EventKind::Alert));
                if alerted {
                    prop_assert!(recovered_since_alert);
                    recovered_since_alert = false;
                }
                if reading >= recovery {
                    recovered_since_alert = true;
                }
            }
        }
    }
}
