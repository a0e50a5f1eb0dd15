use crate::domain::{PhoneNumber, SmsMessage};
use crate::hal::{format_incoming_sms, ModemPort, CTRL_Z};

const ESC: u8 = 0x1b;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Mode {
    Command,
    Body { to: PhoneNumber },
}

/// Behavioural stand-in for the SIM800L in text mode.
///
/// Understands the init commands and `AT+CMGS`; anything else is answered
/// `ERROR`. Submitted messages collect in an outbox for the network.
pub struct ModemEmulator {
    to_device: Vec<u8>,
    line: Vec<u8>,
    body: Vec<u8>,
    mode: Mode,
    text_mode: bool,
    push_delivery: bool,
    next_ref: u32,
    silent_replies: u32,
    outbox: Vec<(PhoneNumber, String)>,
}

impl ModemEmulator {
    pub fn new() -> Self {
        Self::with_silent_replies(0)
    }

    /// A modem that ignores its first `n` commands, as a slow boot would.
    pub fn with_silent_replies(n: u32) -> Self {
        ModemEmulator {
            to_device: Vec::new(),
            line: Vec::new(),
            body: Vec::new(),
            mode: Mode::Command,
            text_mode: false,
            push_delivery: false,
            next_ref: 1,
            silent_replies: n,
            outbox: Vec::new(),
        }
    }

    pub fn text_mode(&self) -> bool {
        self.text_mode
    }

    pub fn push_delivery(&self) -> bool {
        self.push_delivery
    }

    /// Pushes a network-delivered message to the device as a `+CMT` URC.
    /// Returns false if push delivery has not been enabled.
    pub fn deliver(&mut self, msg: &SmsMessage) -> bool {
        if !self.push_delivery {
            return false;
        }
        self.to_device.extend(format_incoming_sms(msg));
        true
    }

    pub fn take_outbox(&mut self) -> Vec<(PhoneNumber, String)> {
        std::mem::take(&mut self.outbox)
    }

    fn reply(&mut self, s: &str) {
        self.to_device.extend_from_slice(s.as_bytes());
    }

    fn command(&mut self, cmd: &str) {
        if self.silent_replies > 0 {
            self.silent_replies -= 1;
            return;
        }
        match cmd {
            "AT" => self.reply("\r\nOK\r\n"),
            "AT+CMGF=1" | "AT+CMGF=0" => {
                self.text_mode = cmd.ends_with('1');
                self.reply("\r\nOK\r\n");
            }
            "AT+CNMI=2,2,0,0,0" => {
                self.push_delivery = true;
                self.reply("\r\nOK\r\n");
            }
            _ => match cmd
                .strip_prefix("AT+CMGS=\"")
                .and_then(|r| r.strip_suffix('"'))
                .and_then(|n| PhoneNumber::canonicalize(n).ok())
            {
                Some(to) if self.text_mode => {
                    self.mode = Mode::Body { to };
                    self.body.clear();
                    self.reply("\r\n> ");
                }
                _ => self.reply("\r\nERROR\r\n"),
            },
        }
    }

    fn body_byte(&mut self, b: u8) {
        match b {
            CTRL_Z => {
                let Mode::Body { to } = std::mem::replace(&mut self.mode, Mode::Command) else {
                    return;
                };
                let body = String::from_utf8_lossy(&std::mem::take(&mut self.body)).into_owned();
                self.outbox.push((to, body));
                let r = self.next_ref;
                self.next_ref = self.next_ref % 255 + 1;
                self.reply(&format!("\r\n+CMGS: {r}\r\n\r\nOK\r\n"));
            }
            ESC => {
                self.mode = Mode::Command;
                self.body.clear();
                self.reply("\r\nOK\r\n");
            }
            _ => self.body.push(b),
        }
    }
}

impl Default for ModemEmulator {
    fn default() -> Self {
        Self::new()
    }
}

impl ModemPort for ModemEmulator {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            if matches!(self.mode, Mode::Body { .. }) {
                self.body_byte(b);
                continue;
            }
            match b {
                b'\r' => {
                    let line = std::mem::take(&mut self.line);
                    let cmd = String::from_utf8_lossy(&line).trim().to_string();
                    if !cmd.is_empty() {
                        self.command(&cmd);
                    }
                }
                b'\n' => {}
                _ => self.line.push(b),
            }
        }
    }

    fn read(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.to_device)
    }
}
