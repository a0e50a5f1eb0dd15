// The SIM800L text-mode exchange: init, a `+CMT` delivery decoded from
// arbitrary chunks, and an outgoing `AT+CMGS` send.

use std::error::Error;

use feeder_core::domain::{PhoneNumber, SmsMessage};
use feeder_core::hal::{
    encode_send_sms, format_incoming_sms, run_modem_init, ModemCodec, ModemPort,
};
use feeder_core::simenv::ModemEmulator;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let device: PhoneNumber = "+8801900000001".parse()?;
    let owner: PhoneNumber = "+8801712345678".parse()?;

    // first two commands go unanswered, as after a cold start
    let mut modem = ModemEmulator::with_silent_replies(2);
    let mut codec = ModemCodec::new(device.clone());
    let report = run_modem_init(|cmd| {
        print!("-> {}", String::from_utf8_lossy(cmd).replace('\r', "\\r\n"));
        modem.write(cmd);
        codec.decode(&modem.read()).into_iter().last()
    })?;
    println!("init retries: {:?}", report.retries);

    let msg = SmsMessage::new(owner.clone(), device.clone(), "1234 FEED", 8 * 3_600_000)?;
    let wire = format_incoming_sms(&msg);
    println!("URC bytes: {:?}", String::from_utf8_lossy(&wire));
    let mut rx = ModemCodec::new(device);
    let mut events = Vec::new();
    for chunk in wire.chunks(7) {
        events.extend(rx.decode(chunk));
    }
    println!("decoded from 7-byte chunks: {events:?}");

    let frames = encode_send_sms(&owner, "OK: FED 50g, LEVEL 96%")?;
    modem.write(&frames.command);
    println!("prompt: {:?}", codec.decode(&modem.read()));
    modem.write(&frames.payload);
    println!("confirm: {:?}", codec.decode(&modem.read()));
    println!("handed to network: {:?}", modem.take_outbox());

    assert!(encode_send_sms(&owner, &"x".repeat(161)).is_err());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
