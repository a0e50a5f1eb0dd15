//! Text-mode AT command codec for the SIM800L subset the feeder uses.
//!
//! Wire rules: lines end in CRLF, the send prompt is `> ` (no line ending),
//! a message body is terminated by CTRL-Z (0x1A), and quoted fields use
//! ASCII double quotes.

use chrono::{Duration, NaiveDate, NaiveDateTime};

use crate::domain::{validate_sms_body, PhoneNumber, SimTime, SmsMessage, MAX_SMS_BODY};

use super::HalError;

pub const CTRL_Z: u8 = 0x1a;
pub const PROMPT: &[u8] = b"> ";

const CMT_PREFIX: &str = "+CMT: ";
const CMGS_PREFIX: &str = "+CMGS: ";
const TIMESTAMP_FORMAT: &str = "%y/%m/%d,%H:%M:%S";

/// Calendar date of simulation time zero.
pub fn sim_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2025, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid epoch")
}

/// `yy/MM/dd,hh:mm:ss+zz` for a simulation time; the zone is always `+00`.
pub fn format_timestamp(t: SimTime) -> String {
    let at = sim_epoch() + Duration::milliseconds(t as i64);
    format!("{}+00", at.format(TIMESTAMP_FORMAT))
}

/// Inverse of [`format_timestamp`]. The zone quarter-hours are ignored and
/// times before the epoch saturate to zero.
pub fn parse_timestamp(s: &str) -> Option<SimTime> {
    if s.len() != 20 || !matches!(s.as_bytes()[17], b'+' | b'-') {
        return None;
    }
    if !s[18..].bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let at = NaiveDateTime::parse_from_str(&s[..17], TIMESTAMP_FORMAT).ok()?;
    let ms = (at - sim_epoch()).num_milliseconds();
    Some(ms.max(0) as SimTime)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModemEvent {
    Ok,
    Error,
    SendPrompt,
    SendConfirm(u32),
    IncomingSms(SmsMessage),
    Unparsed(String),
}

/// A decoded event plus the raw lines it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub lines: Vec<String>,
    pub event: ModemEvent,
}

/// The two phases of an outgoing text-mode SMS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendSmsFrames {
    /// `AT+CMGS="<number>"` CR; sent first, answered by the prompt.
    pub command: Vec<u8>,
    /// Body followed by CTRL-Z; sent after the prompt.
    pub payload: Vec<u8>,
}

impl SendSmsFrames {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.command.clone();
        out.extend_from_slice(&self.payload);
        out
    }
}

pub fn encode_send_sms(to: &PhoneNumber, body: &str) -> Result<SendSmsFrames, HalError> {
    if body.len() > MAX_SMS_BODY {
        return Err(HalError::BodyTooLong(body.len()));
    }
    validate_sms_body(body).map_err(|e| HalError::InvalidBody(e.to_string()))?;
    let command = format!("AT+CMGS=\"{to}\"\r").into_bytes();
    let mut payload = body.as_bytes().to_vec();
    payload.push(CTRL_Z);
    Ok(SendSmsFrames { command, payload })
}

/// The unsolicited `+CMT` delivery of a message, as the modem pushes it in
/// CNMI=2,2 mode.
pub fn format_incoming_sms(msg: &SmsMessage) -> Vec<u8> {
    format!(
        "\r\n{CMT_PREFIX}\"{}\",\"\",\"{}\"\r\n{}\r\n",
        msg.from,
        format_timestamp(msg.sent_at),
        msg.body
    )
    .into_bytes()
}

/// Splits `"a","b,c","d"` into its unquoted fields.
fn quoted_fields(s: &str) -> Option<Vec<&str>> {
    let mut fields = Vec::new();
    let mut rest = s;
    loop {
        let inner = rest.strip_prefix('"')?;
        let end = inner.find('"')?;
        fields.push(&inner[..end]);
        rest = &inner[end + 1..];
        if rest.is_empty() {
            return Some(fields);
        }
        rest = rest.strip_prefix(',')?;
    }
}

fn parse_cmt_header(line: &str) -> Option<(PhoneNumber, SimTime)> {
    let fields = quoted_fields(line.strip_prefix(CMT_PREFIX)?)?;
    let [number, _alpha, ts] = fields[..] else {
        return None;
    };
    let from = PhoneNumber::canonicalize(number).ok()?;
    if from.as_str() != number {
        return None;
    }
    Some((from, parse_timestamp(ts)?))
}

struct PendingHeader {
    raw: String,
    from: PhoneNumber,
    sent_at: SimTime,
}

/// Incremental decoder for the modem's output stream.
///
/// Bytes are consumed one at a time so the events produced do not depend
/// on how the stream was chunked.
pub struct ModemCodec {
    own_number: PhoneNumber,
    line: Vec<u8>,
    pending: Option<PendingHeader>,
}

impl ModemCodec {
    /// `own_number` becomes the `to` of every decoded incoming SMS.
    pub fn new(own_number: PhoneNumber) -> Self {
        ModemCodec {
            own_number,
            line: Vec::new(),
            pending: None,
        }
    }

    pub fn decode(&mut self, bytes: &[u8]) -> Vec<ModemEvent> {
        self.decode_frames(bytes)
            .into_iter()
            .map(|f| f.event)
            .collect()
    }

    pub fn decode_frames(&mut self, bytes: &[u8]) -> Vec<Frame> {
        let mut out = Vec::new();
        for &b in bytes {
            self.line.push(b);
            if b == b'\n' {
                let mut line = std::mem::take(&mut self.line);
                line.pop();
                if line.last() == Some(&b'\r') {
                    line.pop();
                }
                self.finish_line(&line, &mut out);
            } else if self.pending.is_none() && self.line == PROMPT {
                self.line.clear();
                out.push(Frame {
                    lines: vec!["> ".to_string()],
                    event: ModemEvent::SendPrompt,
                });
            }
        }
        out
    }

    /// True when no partial line or half-received SMS is buffered.
    pub fn is_idle(&self) -> bool {
        self.line.is_empty() && self.pending.is_none()
    }

    fn finish_line(&mut self, raw: &[u8], out: &mut Vec<Frame>) {
        let text = String::from_utf8_lossy(raw).into_owned();
        if let Some(header) = self.pending.take() {
            match SmsMessage::new(
                header.from,
                self.own_number.clone(),
                text.clone(),
                header.sent_at,
            ) {
                Ok(msg) => out.push(Frame {
                    lines: vec![header.raw, text],
                    event: ModemEvent::IncomingSms(msg),
                }),
                Err(_) => {
                    out.push(unparsed(header.raw));
                    if !text.is_empty() {
                        out.push(unparsed(text));
                    }
                }
            }
            return;
        }
        if text.is_empty() {
            return;
        }
        let event = match text.as_str() {
            "OK" => ModemEvent::Ok,
            "ERROR" => ModemEvent::Error,
            _ => {
                if let Some(n) = text.strip_prefix(CMGS_PREFIX).and_then(parse_decimal) {
                    ModemEvent::SendConfirm(n)
                } else if let Some((from, sent_at)) = parse_cmt_header(&text) {
                    self.pending = Some(PendingHeader {
                        raw: text,
                        from,
                        sent_at,
                    });
                    return;
                } else {
                    return out.push(unparsed(text));
                }
            }
        };
        out.push(Frame {
            lines: vec![text],
            event,
        });
    }
}

fn parse_decimal(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn unparsed(line: String) -> Frame {
    Frame {
        lines: vec![line.clone()],
        event: ModemEvent::Unparsed(line),
    }
}
