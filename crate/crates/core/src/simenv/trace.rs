use serde::{Deserialize, Serialize};

use crate::domain::{EventKind, PhoneNumber, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TraceKind {
    /// Device firmware accepted an incoming SMS.
    SmsIn,
    /// Device modem handed an SMS to the network.
    SmsOut,
    FeedScheduled,
    FeedRemote,
    LevelCheck,
    Alert,
    ErrorReply,
    Reset,
    /// An owner phone handed an SMS to the network.
    PhoneSend,
    /// An owner phone received an SMS.
    PhoneRecv,
    /// The network dropped a message.
    SmsLost,
    /// The gate closed and food left the hopper.
    Dispense,
    /// Rail current changed.
    Power,
    Refill,
    Recharge,
    Boot,
    End,
}

impl From<EventKind> for TraceKind {
    fn from(kind: EventKind) -> Self {
        match kind {
            EventKind::SmsIn => TraceKind::SmsIn,
            EventKind::SmsOut => TraceKind::SmsOut,
            EventKind::FeedScheduled => TraceKind::FeedScheduled,
            EventKind::FeedRemote => TraceKind::FeedRemote,
            EventKind::LevelCheck => TraceKind::LevelCheck,
            EventKind::Alert => TraceKind::Alert,
            EventKind::ErrorReply => TraceKind::ErrorReply,
            EventKind::Reset => TraceKind::Reset,
        }
    }
}

/// One line of the NDJSON trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub at_ms: SimTime,
    pub kind: TraceKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_ma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_pct: Option<f64>,
    /// The message this record belongs to, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg_id: Option<u64>,
    /// Phone number on the far side of an SMS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<PhoneNumber>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grams: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

impl TraceRecord {
    pub fn new(at_ms: SimTime, kind: TraceKind, detail: impl Into<String>) -> Self {
        TraceRecord {
            seq: 0,
            at_ms,
            kind,
            detail: detail.into(),
            current_ma: None,
            battery_pct: None,
            msg_id: None,
            party: None,
            grams: None,
            duration_ms: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}

/// Append-only record list; `seq` equals the record's index.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mut record: TraceRecord) -> u64 {
        let seq = self.records.len() as u64;
        record.seq = seq;
        self.records.push(record);
        seq
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with `seq >= cursor`.
    pub fn since(&self, cursor: u64) -> &[TraceRecord] {
        let start = (cursor as usize).min(self.records.len());
        &self.records[start..]
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json());
            out.push('\n');
        }
        out
    }
}

/// Reads an NDJSON trace back.
pub fn parse_ndjson(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
