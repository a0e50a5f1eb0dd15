use super::{HalError, ModemEvent};

/// Echo check, text mode, and push delivery of incoming SMS.
pub const INIT_COMMANDS: [&str; 3] = ["AT", "AT+CMGF=1", "AT+CNMI=2,2,0,0,0"];

/// Retries per command after the first attempt.
pub const INIT_RETRIES: u32 = 3;

pub fn modem_init_sequence() -> Vec<Vec<u8>> {
    INIT_COMMANDS
        .iter()
        .map(|c| format!("{c}\r").into_bytes())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InitReport {
    /// `(command, retries needed)` for each command that needed any.
    pub retries: Vec<(String, u32)>,
}

impl InitReport {
    pub fn total_retries(&self) -> u32 {
        self.retries.iter().map(|(_, n)| n).sum()
    }
}

/// Walks the init sequence. `exchange` writes one command and returns the
/// final result code, or `None` on timeout. A command must be answered `OK`
/// before the next one is sent.
pub fn run_modem_init<F>(mut exchange: F) -> Result<InitReport, HalError>
where
    F: FnMut(&[u8]) -> Option<ModemEvent>,
{
    let mut report = InitReport::default();
    for (name, bytes) in INIT_COMMANDS.iter().zip(modem_init_sequence()) {
        let mut retries = 0;
        loop {
            if exchange(&bytes) == Some(ModemEvent::Ok) {
                break;
            }
            if retries == INIT_RETRIES {
                return Err(HalError::ModemUnresponsive {
                    command: name.to_string(),
                    attempts: INIT_RETRIES + 1,
                });
            }
            retries += 1;
        }
        if retries > 0 {
            report.retries.push((name.to_string(), retries));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn healthy_modem() {
        let mut sent = Vec::new();
        let report = run_modem_init(|cmd| {
            sent.push(cmd.to_vec());
            Some(ModemEvent::Ok)
        })
        .unwrap();
        assert_eq!(
            sent,
            vec![
                b"AT\r".to_vec(),
                b"AT+CMGF=1\r".to_vec(),
                b"AT+CNMI=2,2,0,0,0\r".to_vec()
            ]
        );
        assert_eq!(report.total_retries(), 0);
    }

    #[test]
    fn two_timeouts_then_ok() {
        let mut timeouts = 2;
        let report = run_modem_init(|_| {
            if timeouts > 0 {
                timeouts -= 1;
                None
            } else {
                Some(ModemEvent::Ok)
            }
        })
        .unwrap();
        assert_eq!(report.retries, vec![("AT".to_string(), 2)]);
    }

    #[test]
    fn error_counts_as_failed_attempt() {
        let mut n = 0;
        let report = run_modem_init(|cmd| {
            n += 1;
            if cmd == b"AT+CMGF=1\r" && n < 4 {
                Some(ModemEvent::Error)
            } else {
                Some(ModemEvent::Ok)
            }
        })
        .unwrap();
        assert_eq!(report.retries, vec![("AT+CMGF=1".to_string(), 2)]);
    }

    #[test]
    fn exhausted_retries() {
        let mut attempts = 0;
        let err = run_modem_init(|_| {
            attempts += 1;
            None
        })
        .unwrap_err();
        assert_eq!(attempts, 4);
        assert_eq!(
            err,
            HalError::ModemUnresponsive {
                command: "AT".into(),
                attempts: 4
            }
        );
    }
}
