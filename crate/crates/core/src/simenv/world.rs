use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::domain::{
    DispenseResult, PhoneNumber, ServoCommandValue, SimTime, SmsMessage, TimeOfDay,
};
use crate::firmware::{Counters, DeviceState, FirmwareAction};
use crate::hal::{
    encode_send_sms, run_modem_init, ClockPort, Credentials, EepromStorage, InitReport, ModemCodec,
    ModemEvent, ModemPort, PortSet, ServoPort, StoragePort, UltrasonicPort,
};

use super::rng::stream_rng;
use super::{
    DeliveryOutcome, GsmNetworkModel, HopperModel, ModemEmulator, PowerModel, SimClock, SimConfig,
    SimError, Trace, TraceKind, TraceRecord, UltrasonicModel, ECHO_TIMEOUT_MS,
};

pub type MessageId = u64;

const NETWORK_STREAM: u64 = 1;
const HOPPER_STREAM: u64 = 2;
const RANGER_STREAM: u64 = 3;

#[derive(Debug, Clone)]
pub enum SimEvent {
    /// The network hands a message to the device's modem.
    DeliverToDevice {
        id: MessageId,
        msg: SmsMessage,
    },
    /// The firmware reads whatever the modem has pushed.
    DevicePoll,
    DeliverToPhone {
        id: MessageId,
        reply_to: Option<MessageId>,
        msg: SmsMessage,
    },
    FirmwareWake,
    EchoReturn(Option<f64>),
    ServoSet(ServoCommandValue),
}

impl ClockPort for SimClock<SimEvent> {
    fn now(&self) -> SimTime {
        SimClock::now(self)
    }

    fn wake_at(&mut self, at: SimTime) {
        let at = at.max(SimClock::now(self));
        self.schedule(SimEvent::FirmwareWake, at)
            .expect("wake clamped to now");
    }
}

/// The dispensing gate: food flows from the hopper while it is open.
pub struct GateServo {
    hopper: HopperModel,
    position: ServoCommandValue,
    opened_at: Option<SimTime>,
    last_result: Option<DispenseResult>,
}

impl GateServo {
    pub fn new(hopper: HopperModel) -> Self {
        GateServo {
            hopper,
            position: ServoCommandValue::CLOSED,
            opened_at: None,
            last_result: None,
        }
    }

    pub fn hopper(&self) -> &HopperModel {
        &self.hopper
    }

    pub fn hopper_mut(&mut self) -> &mut HopperModel {
        &mut self.hopper
    }

    pub fn position(&self) -> ServoCommandValue {
        self.position
    }

    pub fn is_open(&self) -> bool {
        self.opened_at.is_some()
    }

    pub fn take_result(&mut self) -> Option<DispenseResult> {
        self.last_result.take()
    }
}

impl ServoPort for GateServo {
    fn set(&mut self, value: ServoCommandValue, now: SimTime) {
        self.position = value;
        match (value.pwm > 0, self.opened_at) {
            (true, None) => self.opened_at = Some(now),
            (false, Some(at)) => {
                self.opened_at = None;
                self.last_result = Some(self.hopper.dispense(now - at, now));
            }
            _ => {}
        }
    }
}

/// A delivered message as seen by an owner phone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InboxEntry {
    pub id: MessageId,
    pub delivered_at: SimTime,
    #[serde(flatten)]
    pub msg: SmsMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceSnapshot {
    pub level_pct: Option<f64>,
    pub servo_open: bool,
    pub next_feed: Option<String>,
    pub next_feed_at_ms: Option<SimTime>,
    pub counters: Counters,
    pub battery_pct: f64,
    pub hopper_g: f64,
    pub sim_now_ms: SimTime,
    pub alert_armed: bool,
    pub trace_len: u64,
}

type Ports = PortSet<ModemEmulator, UltrasonicModel, GateServo, SimClock<SimEvent>, EepromStorage>;

/// The feeder firmware wired to simulated peripherals, a GSM network and
/// any number of owner phones.
pub struct World {
    config: SimConfig,
    seed: u64,
    ports: Ports,
    codec: ModemCodec,
    firmware: DeviceState,
    network: GsmNetworkModel,
    power: PowerModel,
    trace: Trace,
    init_report: InitReport,
    arriving: VecDeque<MessageId>,
    decoded: VecDeque<SmsMessage>,
    inboxes: BTreeMap<PhoneNumber, Vec<InboxEntry>>,
    known: BTreeSet<PhoneNumber>,
    next_id: MessageId,
    handling: Option<MessageId>,
    dispense_origin: Option<MessageId>,
    reply_to: Option<MessageId>,
}

impl World {
    /// Provisions the EEPROM, brings up the modem and boots the firmware.
    pub fn new(config: SimConfig, seed: u64) -> Result<World, SimError> {
        config.validate()?;
        let start = config.device.start_ms;
        let mut storage = EepromStorage::new();
        storage.save(&Credentials {
            pin: config.feeder.pin.clone(),
            authorized: config.feeder.authorized.clone(),
        })?;
        let mut ports = PortSet {
            modem: ModemEmulator::with_silent_replies(config.device.modem_silent_replies),
            ultrasonic: UltrasonicModel::new(
                config.ultrasonic.clone(),
                stream_rng(seed, RANGER_STREAM),
            ),
            servo: GateServo::new(HopperModel::new(
                config.hopper.clone(),
                stream_rng(seed, HOPPER_STREAM),
            )),
            clock: SimClock::new(start),
            storage,
        };
        let mut codec = ModemCodec::new(config.device.number.clone());
        let modem = &mut ports.modem;
        let init_report = run_modem_init(|cmd| {
            modem.write(cmd);
            codec
                .decode(&modem.read())
                .into_iter()
                .rfind(|e| matches!(e, ModemEvent::Ok | ModemEvent::Error))
        })?;

        let creds = ports.storage.load()?;
        let mut feeder = config.feeder.clone();
        feeder.pin = creds.pin;
        feeder.authorized = creds.authorized;
        let (firmware, boot_actions) = DeviceState::init(feeder, start)?;

        let mut world = World {
            network: GsmNetworkModel::new(config.network.clone(), stream_rng(seed, NETWORK_STREAM)),
            power: PowerModel::new(config.power.clone(), start),
            known: config.feeder.authorized.clone(),
            config,
            seed,
            ports,
            codec,
            firmware,
            trace: Trace::new(),
            init_report,
            arriving: VecDeque::new(),
            decoded: VecDeque::new(),
            inboxes: BTreeMap::new(),
            next_id: 0,
            handling: None,
            dispense_origin: None,
            reply_to: None,
        };
        let retries = world.init_report.total_retries();
        world.push(TraceRecord::new(
            start,
            TraceKind::Boot,
            format!("modem ready after {retries} retries, seed {seed}"),
        ));
        let mut r = TraceRecord::new(start, TraceKind::Power, "baseline");
        r.current_ma = Some(world.power.current_ma());
        r.battery_pct = Some(world.power.battery_pct());
        world.push(r);
        world.apply(boot_actions, start);
        Ok(world)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> SimTime {
        self.ports.clock.now()
    }

    pub fn firmware(&self) -> &DeviceState {
        &self.firmware
    }

    pub fn hopper(&self) -> &HopperModel {
        self.ports.servo.hopper()
    }

    pub fn power(&self) -> &PowerModel {
        &self.power
    }

    pub fn ranger_mut(&mut self) -> &mut UltrasonicModel {
        &mut self.ports.ultrasonic
    }

    pub fn init_report(&self) -> &InitReport {
        &self.init_report
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn trace_ndjson(&self) -> String {
        self.trace.to_ndjson()
    }

    pub fn device_number(&self) -> &PhoneNumber {
        &self.config.device.number
    }

    /// True for numbers that are authorized or have sent or received a message.
    pub fn knows(&self, number: &PhoneNumber) -> bool {
        self.known.contains(number)
    }

    /// Messages delivered to `number` at positions `>= since`, and the next cursor.
    pub fn inbox(&self, number: &PhoneNumber, since: usize) -> (&[InboxEntry], usize) {
        let all = self.inboxes.get(number).map(Vec::as_slice).unwrap_or(&[]);
        let start = since.min(all.len());
        (&all[start..], since.max(all.len()))
    }

    pub fn snapshot(&self) -> DeviceSnapshot {
        let fw = &self.firmware;
        DeviceSnapshot {
            level_pct: fw.last_level().map(|r| r.level_pct),
            servo_open: fw.servo_open(),
            next_feed: fw
                .next_feed_at()
                .map(|t| TimeOfDay::of_sim_time(t).to_string()),
            next_feed_at_ms: fw.next_feed_at(),
            counters: fw.counters(),
            battery_pct: self.power.battery_pct(),
            hopper_g: self.hopper().contents_g(),
            sim_now_ms: self.now(),
            alert_armed: fw.alert_armed(),
            trace_len: self.trace.len() as u64,
        }
    }

    fn push(&mut self, record: TraceRecord) -> u64 {
        self.trace.push(record)
    }

    fn alloc_id(&mut self) -> MessageId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// An owner phone sends `body` to the feeder now.
    pub fn phone_send(&mut self, from: &PhoneNumber, body: &str) -> Result<MessageId, SimError> {
        let now = self.now();
        let msg = SmsMessage::new(from.clone(), self.config.device.number.clone(), body, now)?;
        let id = self.alloc_id();
        self.known.insert(from.clone());
        let mut r = TraceRecord::new(now, TraceKind::PhoneSend, body);
        r.msg_id = Some(id);
        r.party = Some(from.clone());
        self.push(r);
        match self.network.submit() {
            DeliveryOutcome::Delivered { latency_ms } => {
                self.ports
                    .clock
                    .schedule(SimEvent::DeliverToDevice { id, msg }, now + latency_ms)?;
            }
            DeliveryOutcome::Dropped => {
                let mut r = TraceRecord::new(now, TraceKind::SmsLost, "dropped toward device");
                r.msg_id = Some(id);
                r.party = Some(from.clone());
                self.push(r);
            }
        }
        Ok(id)
    }

    pub fn advance_by(&mut self, ms: SimTime) -> Result<(), SimError> {
        self.advance_to(self.now() + ms)
    }

    /// Runs every event due up to `t`; the clock ends at `t`.
    pub fn advance_to(&mut self, t: SimTime) -> Result<(), SimError> {
        if t < self.now() {
            return Err(SimError::SchedulingInPast {
                at: t,
                now: self.now(),
            });
        }
        while let Some((at, event)) = self.ports.clock.pop_due(t) {
            self.flush_power(at);
            self.dispatch(event, at);
        }
        self.ports.clock.advance_to(t)?;
        self.flush_power(t);
        Ok(())
    }

    /// Time of the next pending event, if any.
    pub fn next_event_time(&self) -> Option<SimTime> {
        self.ports.clock.next_event_time()
    }

    /// Adds food (capped at capacity) and returns the grams added.
    pub fn refill(&mut self, grams: f64) -> f64 {
        let now = self.now();
        let added = self.ports.servo.hopper_mut().refill(grams);
        let mut r = TraceRecord::new(now, TraceKind::Refill, format!("refill {added} g"));
        r.grams = Some(added);
        self.push(r);
        added
    }

    pub fn recharge(&mut self) {
        let now = self.now();
        self.flush_power(now);
        self.power.recharge();
        let mut r = TraceRecord::new(now, TraceKind::Recharge, "battery recharged");
        r.current_ma = Some(self.power.current_ma());
        r.battery_pct = Some(self.power.battery_pct());
        self.push(r);
    }

    /// Appends the closing record of a finite run.
    pub fn close_trace(&mut self) {
        let now = self.now();
        self.flush_power(now);
        let mut r = TraceRecord::new(
            now,
            TraceKind::End,
            format!("rail {:.6} mAh", self.power.consumed_rail_mah()),
        );
        r.current_ma = Some(self.power.current_ma());
        r.battery_pct = Some(self.power.battery_pct());
        self.push(r);
    }

    fn flush_power(&mut self, t: SimTime) {
        for s in self.power.settle(t) {
            let mut r = TraceRecord::new(s.at_ms, TraceKind::Power, "");
            r.current_ma = Some(s.current_ma);
            r.battery_pct = Some(s.battery_pct);
            self.push(r);
        }
    }

    fn observe_battery(&mut self) {
        let pct = self.power.battery_pct().round() as u8;
        self.firmware.observe_battery(pct);
    }

    fn dispatch(&mut self, event: SimEvent, now: SimTime) {
        match event {
            SimEvent::DeliverToDevice { id, msg } => {
                if self.ports.modem.deliver(&msg) {
                    self.power.modem_burst(now);
                    self.arriving.push_back(id);
                    self.ports
                        .clock
                        .schedule(SimEvent::DevicePoll, now + self.config.device.processing_ms)
                        .expect("future poll");
                }
            }
            SimEvent::DevicePoll => {
                let bytes = self.ports.modem.read();
                self.route_modem_output(&bytes);
                self.handle_incoming(now);
            }
            SimEvent::DeliverToPhone { id, reply_to, msg } => {
                let mut r = TraceRecord::new(now, TraceKind::PhoneRecv, msg.body.clone());
                r.msg_id = reply_to.or(Some(id));
                r.party = Some(msg.to.clone());
                self.push(r);
                self.known.insert(msg.to.clone());
                self.inboxes
                    .entry(msg.to.clone())
                    .or_default()
                    .push(InboxEntry {
                        id,
                        delivered_at: now,
                        msg,
                    });
            }
            SimEvent::FirmwareWake => {
                self.observe_battery();
                let was_open = self.firmware.servo_open();
                let origin = self.dispense_origin;
                let actions = self.firmware.tick(now);
                if was_open && !self.firmware.servo_open() {
                    self.reply_to = origin;
                    self.dispense_origin = None;
                }
                self.apply(actions, now);
                self.reply_to = None;
            }
            SimEvent::EchoReturn(echo) => {
                let actions = self.firmware.handle_echo(echo, now);
                self.apply(actions, now);
            }
            SimEvent::ServoSet(value) => self.set_servo(value, now),
        }
    }

    /// Queues decoded incoming messages; other modem output is discarded.
    fn route_modem_output(&mut self, bytes: &[u8]) -> Vec<ModemEvent> {
        let mut rest = Vec::new();
        for ev in self.codec.decode(bytes) {
            match ev {
                ModemEvent::IncomingSms(msg) => self.decoded.push_back(msg),
                other => rest.push(other),
            }
        }
        rest
    }

    fn handle_incoming(&mut self, now: SimTime) {
        while let Some(msg) = self.decoded.pop_front() {
            let id = self.arriving.pop_front();
            let mut r = TraceRecord::new(now, TraceKind::SmsIn, msg.body.clone());
            r.msg_id = id;
            r.party = Some(msg.from.clone());
            self.push(r);
            self.observe_battery();
            self.handling = id;
            self.reply_to = id;
            let actions = self.firmware.handle_sms(&msg, now);
            self.apply(actions, now);
            self.handling = None;
            self.reply_to = None;
        }
    }

    fn set_servo(&mut self, value: ServoCommandValue, now: SimTime) {
        let was_open = self.ports.servo.is_open();
        self.ports.servo.set(value, now);
        let active = self.config.power.servo_active_ma;
        match (was_open, self.ports.servo.is_open()) {
            (false, true) => self.power.start_load(now, active),
            (true, false) => self.power.end_load(now, active),
            _ => {}
        }
        if let Some(result) = self.ports.servo.take_result() {
            let mut r = TraceRecord::new(
                now,
                TraceKind::Dispense,
                format!("{:.3} g in {} ms", result.dispensed_g, result.duration_ms),
            );
            r.grams = Some(result.dispensed_g);
            r.duration_ms = Some(result.duration_ms);
            r.msg_id = self.dispense_origin;
            self.push(r);
        }
    }

    fn apply(&mut self, actions: Vec<FirmwareAction>, now: SimTime) {
        for action in actions {
            match action {
                FirmwareAction::SendSms { to, body } => self.device_send(to, body, now),
                FirmwareAction::ServoSet(value) => {
                    if value.pwm > 0 && !self.ports.servo.is_open() {
                        self.dispense_origin = self.handling;
                    }
                    self.set_servo(value, now);
                }
                FirmwareAction::ServoSetAfter { delay_ms, value } => self
                    .ports
                    .clock
                    .schedule(SimEvent::ServoSet(value), now + delay_ms)
                    .expect("future servo step"),
                FirmwareAction::TriggerRanging => self.range(now),
                FirmwareAction::ScheduleWake(at) => self.ports.clock.wake_at(at),
                FirmwareAction::Log(rec) => {
                    let mut r = TraceRecord::new(now, rec.kind.into(), rec.detail);
                    r.msg_id = self.handling;
                    self.push(r);
                }
            }
        }
    }

    fn range(&mut self, now: SimTime) {
        let height = self.config.feeder.container_height_cm;
        let distance = height - self.ports.servo.hopper().fill_height_cm();
        self.ports.ultrasonic.set_true_distance(distance);
        self.power.sensor_ping(now);
        let echo = self.ports.ultrasonic.ping();
        let delay = echo.map_or(ECHO_TIMEOUT_MS, |us| ((us / 1000.0).ceil() as u64).max(1));
        self.ports
            .clock
            .schedule(SimEvent::EchoReturn(echo), now + delay)
            .expect("future echo");
    }

    /// Pushes one SMS through the AT exchange and onto the network.
    fn device_send(&mut self, to: PhoneNumber, body: String, now: SimTime) {
        let lost = |world: &mut World, why: String| {
            let mut r = TraceRecord::new(now, TraceKind::SmsLost, why);
            r.party = Some(to.clone());
            r.msg_id = world.reply_to;
            world.push(r);
        };
        let frames = match encode_send_sms(&to, &body) {
            Ok(f) => f,
            Err(e) => return lost(self, e.to_string()),
        };
        self.ports.modem.write(&frames.command);
        let bytes = self.ports.modem.read();
        if !self
            .route_modem_output(&bytes)
            .contains(&ModemEvent::SendPrompt)
        {
            return lost(self, "modem refused AT+CMGS".into());
        }
        self.ports.modem.write(&frames.payload);
        let bytes = self.ports.modem.read();
        self.route_modem_output(&bytes);

        for (dest, text) in self.ports.modem.take_outbox() {
            let id = self.alloc_id();
            self.power.modem_burst(now);
            let mut r = TraceRecord::new(now, TraceKind::SmsOut, text.clone());
            r.msg_id = self.reply_to.or(Some(id));
            r.party = Some(dest.clone());
            self.push(r);
            let Ok(msg) =
                SmsMessage::new(self.config.device.number.clone(), dest.clone(), text, now)
            else {
                continue;
            };
            match self.network.submit() {
                DeliveryOutcome::Delivered { latency_ms } => self
                    .ports
                    .clock
                    .schedule(
                        SimEvent::DeliverToPhone {
                            id,
                            reply_to: self.reply_to,
                            msg,
                        },
                        now + latency_ms,
                    )
                    .expect("future delivery"),
                DeliveryOutcome::Dropped => {
                    let mut r = TraceRecord::new(now, TraceKind::SmsLost, "dropped toward phone");
                    r.msg_id = self.reply_to.or(Some(id));
                    r.party = Some(dest);
                    self.push(r);
                }
            }
        }
    }
}
