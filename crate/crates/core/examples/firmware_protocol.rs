// Drives the firmware step machine by hand: boot, a remote FEED, a STATUS,
// and two rejected commands.

use std::error::Error;

use feeder_core::domain::{FeederConfig, PhoneNumber, SmsMessage};
use feeder_core::firmware::{DeviceState, FirmwareAction};

fn show(label: &str, actions: &[FirmwareAction]) {
    println!("{label}:");
    for a in actions {
        match a {
            FirmwareAction::Log(rec) => println!("  log   {:?} {}", rec.kind, rec.detail),
            FirmwareAction::SendSms { to, body } => println!("  sms   {to} <- {body}"),
            other => println!("  {other:?}"),
        }
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let device: PhoneNumber = "+8801900000001".parse()?;
    let owner: PhoneNumber = "+8801712345678".parse()?;
    let stranger: PhoneNumber = "+15550001111".parse()?;
    let sms = |from: &PhoneNumber, body: &str, at| {
        SmsMessage::new(from.clone(), device.clone(), body, at)
    };

    let (mut fw, boot) = DeviceState::init(FeederConfig::default(), 0)?;
    show("boot", &boot);

    let feed = fw.handle_sms(&sms(&owner, "1234 FEED 40", 60_000)?, 60_000);
    show("1234 FEED 40", &feed);
    let close_at = feed
        .iter()
        .find_map(|a| match a {
            FirmwareAction::ScheduleWake(t) => Some(*t),
            _ => None,
        })
        .ok_or("no gate-close wake")?;
    show("gate closes", &fw.tick(close_at));

    show(
        "1234 status",
        &fw.handle_sms(&sms(&owner, "1234 status", 120_000)?, 120_000),
    );
    show(
        "wrong PIN",
        &fw.handle_sms(&sms(&owner, "0000 FEED", 130_000)?, 130_000),
    );
    show(
        "stranger",
        &fw.handle_sms(&sms(&stranger, "1234 FEED", 140_000)?, 140_000),
    );

    let c = fw.counters();
    assert_eq!((c.feeds_remote, c.errors), (1, 2));
    println!("counters: {c:?}");
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
