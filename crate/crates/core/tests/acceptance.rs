//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feeder_core::domain::{FeederConfig, PhoneNumber, ServoCommandValue, SmsMessage, MS_PER_DAY};
use feeder_core::firmware::{distance_from_echo, DeviceState, FirmwareAction, REPLY_UNAUTHORIZED};
use feeder_core::hal::UltrasonicPort;
use feeder_core::hal::{
    encode_send_sms, format_incoming_sms, run_modem_init, ModemCodec, ModemEvent, ModemPort,
};
use feeder_core::harness::{
    run_dispense_trial, run_endurance, run_power_profile, run_sms_trial, TrialKind, TrialSpec,
};
use feeder_core::simenv::{ModemEmulator, SimConfig, TraceKind, UltrasonicModel, UltrasonicParams};

const SEED: u64 = 42;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sms_success_rate() -> Outcome {
    let cfg = SimConfig::default();
    let r100 = run_sms_trial(&cfg, 100, SEED)
        .map_err(|e| e.to_string())?
        .report;
    let rate100 = r100.success_count as f64 / 100.0;
    let t = Instant::now();
    let r10k = run_sms_trial(&cfg, 10_000, SEED)
        .map_err(|e| e.to_string())?
        .report;
    let secs = t.elapsed().as_secs_f64();
    let loss = 1.0 - r10k.success_count as f64 / 10_000.0;
    let r1k = run_sms_trial(&cfg, 1000, SEED)
        .map_err(|e| e.to_string())?
        .report;
    let rate1k = r1k.success_count as f64 / 1000.0;
    check(
        (0.95..=1.0).contains(&rate100)
            && (0.015..=0.025).contains(&loss)
            && (0.965..=0.99).contains(&rate1k)
            && secs < 10.0,
        format!(
            "n=100 success {:.1}%, n=1000 success {:.1}%, n=10000 loss {:.2}% in {secs:.2} s",
            rate100 * 100.0,
            rate1k * 100.0,
            loss * 100.0
        ),
    )
}

fn round_trip_latencies(n: u64) -> Result<Vec<u64>, String> {
    let out = run_sms_trial(&SimConfig::default(), n, SEED).map_err(|e| e.to_string())?;
    let mut sent = std::collections::BTreeMap::new();
    let mut lat = Vec::new();
    for r in &out.records {
        match r.kind {
            TraceKind::PhoneSend => {
                sent.insert(r.msg_id, r.at_ms);
            }
            TraceKind::PhoneRecv if r.detail.starts_with("OK: FED") => {
                lat.push(r.at_ms - sent[&r.msg_id]);
            }
            _ => {}
        }
    }
    Ok(lat)
}

fn response_latency() -> Outcome {
    let lat100 = round_trip_latencies(100)?;
    let lat = round_trip_latencies(1000)?;
    let in_band = |v: &[u64]| v.iter().all(|l| (8000..=12999).contains(l));
    let lo = *lat.iter().min().ok_or("no confirmations")?;
    let hi = *lat.iter().max().unwrap();
    let first_bin = lo / 1000;
    let mut bins = vec![0u64; (hi / 1000 - first_bin + 1) as usize];
    for l in &lat {
        bins[(l / 1000 - first_bin) as usize] += 1;
    }
    let peak = bins
        .iter()
        .enumerate()
        .max_by_key(|(_, c)| **c)
        .map(|(i, _)| i)
        .unwrap();
    let unimodal = bins[..=peak].windows(2).all(|w| w[0] <= w[1])
        && bins[peak..].windows(2).all(|w| w[0] >= w[1]);
    check(
        in_band(&lat100) && in_band(&lat) && unimodal,
        format!(
            "{} + {} round trips within [{lo}, {hi}] ms; 1 s histogram from {} s: {bins:?}",
            lat100.len(),
            lat.len(),
            first_bin
        ),
    )
}

fn dispense_consistency() -> Outcome {
    let r = run_dispense_trial(&SimConfig::default(), 30, SEED)
        .map_err(|e| e.to_string())?
        .report;
    let d = r.dispense.ok_or("no dispenses")?;
    check(
        d.count == 30
            && (48.5..=51.5).contains(&d.mean_g)
            && d.cv <= 0.04
            && d.duration_ms_mean == 2000.0,
        format!(
            "{} cycles, mean {:.2} g, cv {:.4}, open {} ms",
            d.count, d.mean_g, d.cv, d.duration_ms_mean
        ),
    )
}

fn endurance() -> Outcome {
    let cfg = SimConfig::default();
    let t = Instant::now();
    let out = run_endurance(&cfg, 30, SEED, true).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let r = &out.report;
    let alerted: std::collections::BTreeSet<PhoneNumber> = out
        .records
        .iter()
        .filter(|r| r.kind == TraceKind::SmsOut && r.detail.starts_with("ALERT: Low Food Level"))
        .filter_map(|r| r.party.clone())
        .collect();
    let every_owner = cfg.feeder.authorized.iter().all(|n| alerted.contains(n));
    check(
        r.success_count == 90
            && r.n == 90
            && r.missed_feeds == 0
            && r.alert_events >= 1
            && every_owner
            && secs < 30.0,
        format!(
            "{} scheduled feeds, {} missed, {} alert events to {}/{} owners in {secs:.2} s",
            r.success_count,
            r.missed_feeds,
            r.alert_events,
            alerted.len(),
            cfg.feeder.authorized.len()
        ),
    )
}

fn power_profile() -> Outcome {
    let cfg = SimConfig::default();
    let (_, idle) = run_power_profile(&cfg, 600, &[], SEED).map_err(|e| e.to_string())?;
    let flat = idle.iter().all(|s| s.current_ma == 125.0);
    let (_, feed) = run_power_profile(&cfg, 600, &[60], SEED).map_err(|e| e.to_string())?;
    let idle_ma = cfg.power.idle_ma();
    let modem_spikes = feed
        .iter()
        .filter(|s| s.current_ma >= idle_ma + cfg.power.modem_burst_ma)
        .count();
    let servo_plateaus = feed
        .iter()
        .filter(|s| s.current_ma == idle_ma + cfg.power.servo_active_ma)
        .count();
    let (hour, _) = run_power_profile(&cfg, 3600, &[], SEED).map_err(|e| e.to_string())?;
    let mah = hour.report.energy_mah;
    check(
        flat && modem_spikes == 2 && servo_plateaus == 1 && (mah - 125.0).abs() <= 0.1,
        format!(
            "idle segments all 125 mA: {flat}; FEED shows {modem_spikes} modem spikes, {servo_plateaus} servo plateau; 1 h = {mah:.4} mAh"
        ),
    )
}

fn equation_conformance() -> Outcome {
    let servo_ok = (0..=255u8).all(|pwm| {
        let v = ServoCommandValue::new(pwm);
        let angle = v.angle_deg();
        (angle - pwm as f64 * 180.0 / 255.0).abs() < 1e-12
            && ServoCommandValue::from_angle(angle) == v
    });
    let cfg = FeederConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ranger = UltrasonicModel::new(
        UltrasonicParams {
            temp_c: 25.0,
            noise_enabled: false,
            ..UltrasonicParams::default()
        },
        ChaCha8Rng::seed_from_u64(SEED + 1),
    );
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(2.0..=400.0);
        ranger.set_true_distance(d);
        let us = ranger.ping().ok_or("unexpected timeout")?;
        worst = worst.max((distance_from_echo(us, cfg.assumed_sound_speed_mps) - d).abs());
    }
    check(
        servo_ok && worst <= 0.05,
        format!("256 servo commands round-trip: {servo_ok}; worst ranging error {worst:.4} cm over 1000 distances"),
    )
}

fn sensor_error_shape() -> Outcome {
    let assumed = FeederConfig::default().assumed_sound_speed_mps;
    let mut best = (f64::INFINITY, 0.0);
    for temp in -10..=50 {
        let mut ranger = UltrasonicModel::new(
            UltrasonicParams {
                temp_c: temp as f64,
                noise_enabled: false,
                ..UltrasonicParams::default()
            },
            ChaCha8Rng::seed_from_u64(SEED),
        );
        ranger.set_true_distance(100.0);
        let us = ranger.ping().ok_or("timeout")?;
        let err = (distance_from_echo(us, assumed) - 100.0).abs();
        if err < best.0 {
            best = (err, temp as f64);
        }
    }
    let timeout_rate = |deg: f64| {
        let mut ranger = UltrasonicModel::new(
            UltrasonicParams {
                misalignment_deg: deg,
                ..UltrasonicParams::default()
            },
            ChaCha8Rng::seed_from_u64(SEED),
        );
        ranger.set_true_distance(100.0);
        (0..10_000).filter(|_| ranger.ping().is_none()).count() as f64 / 10_000.0
    };
    let (p15, p25) = (timeout_rate(15.0), timeout_rate(25.0));
    check(
        (20.0..=30.0).contains(&best.1) && p25 > p15,
        format!(
            "minimum error {:.4} cm at {} C; timeout rate {p15:.3} at 15 deg, {p25:.3} at 25 deg",
            best.0, best.1
        ),
    )
}

fn random_number(rng: &mut ChaCha8Rng) -> PhoneNumber {
    let len = rng.random_range(8..=15);
    let digits: String = (0..len)
        .map(|_| char::from(b'0' + rng.random_range(0..10)))
        .collect();
    format!("+{digits}").parse().unwrap()
}

fn random_body(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..=160);
    (0..len)
        .map(|_| char::from(rng.random_range(0x20u8..=0x7e)))
        .collect()
}

fn protocol_conformance() -> Outcome {
    const CASES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let device: PhoneNumber = "+8801900000001".parse().unwrap();

    let mut modem = ModemEmulator::new();
    let mut init_codec = ModemCodec::new(device.clone());
    run_modem_init(|cmd| {
        modem.write(cmd);
        init_codec.decode(&modem.read()).into_iter().last()
    })
    .map_err(|e| e.to_string())?;

    let mut failures = Vec::new();
    for i in 0..CASES {
        let from = random_number(&mut rng);
        let body = random_body(&mut rng);
        let sent_at = rng.random_range(0..400u64 * MS_PER_DAY) / 1000 * 1000;
        let msg = SmsMessage::new(from.clone(), device.clone(), body.clone(), sent_at).unwrap();
        let wire = format_incoming_sms(&msg);

        let whole = ModemCodec::new(device.clone()).decode(&wire);
        let mut chunked_codec = ModemCodec::new(device.clone());
        let mut chunked = Vec::new();
        let mut rest = &wire[..];
        while !rest.is_empty() {
            let k = rng.random_range(1..=rest.len());
            chunked.extend(chunked_codec.decode(&rest[..k]));
            rest = &rest[k..];
        }
        if whole != vec![ModemEvent::IncomingSms(msg.clone())] || chunked != whole {
            failures.push(format!("receive case {i}"));
        }

        let frames = encode_send_sms(&from, &body).map_err(|e| e.to_string())?;
        modem.write(&frames.command);
        let prompt = init_codec.decode(&modem.read());
        modem.write(&frames.payload);
        let confirm = init_codec.decode(&modem.read());
        let outbox = modem.take_outbox();
        if prompt != vec![ModemEvent::SendPrompt]
            || !matches!(confirm[..], [ModemEvent::SendConfirm(_), ModemEvent::Ok])
            || outbox != vec![(from, body)]
        {
            failures.push(format!("send case {i}"));
        }
    }

    let (state, _) = DeviceState::init(FeederConfig::default(), 0).map_err(|e| e.to_string())?;
    let mut auth_failures = 0;
    for _ in 0..CASES {
        let from = random_number(&mut rng);
        if state.config().is_authorized(&from) {
            continue;
        }
        let body = random_body(&mut rng);
        let msg = SmsMessage::new(from.clone(), device.clone(), body, 0).unwrap();
        let mut s = state.clone();
        let actions = s.handle_sms(&msg, 1000);
        let expected = vec![FirmwareAction::SendSms {
            to: from,
            body: REPLY_UNAUTHORIZED.to_string(),
        }];
        if actions != expected || s.servo_open() || s.counters().feeds_remote != 0 {
            auth_failures += 1;
        }
    }
    check(
        failures.is_empty() && auth_failures == 0,
        format!(
            "{CASES} receive + {CASES} send codec cases, {} failures ({:?}); {CASES} unauthorized bodies, {auth_failures} failures",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn determinism() -> Outcome {
    let mut specs = Vec::new();
    for kind in [
        TrialKind::Sms,
        TrialKind::Dispense,
        TrialKind::Endurance,
        TrialKind::Power,
    ] {
        let mut s = TrialSpec::new(kind, SEED);
        s.n = 30;
        s.days = 7;
        s.feed_at_s = vec![60, 300];
        specs.push(s);
    }
    let mut identical = 0;
    for s in &specs {
        let a = s.run().map_err(|e| e.to_string())?;
        let b = s.run().map_err(|e| e.to_string())?;
        if a.trace_ndjson() == b.trace_ndjson() && a.report_json() == b.report_json() {
            identical += 1;
        }
    }
    check(
        identical == specs.len(),
        format!(
            "{identical}/{} trials byte-identical on re-run",
            specs.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("sms success rate", sms_success_rate),
        ("response latency", response_latency),
        ("dispense consistency", dispense_consistency),
        ("endurance", endurance),
        ("power profile", power_profile),
        ("equation conformance", equation_conformance),
        ("sensor error shape", sensor_error_shape),
        ("protocol conformance", protocol_conformance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
