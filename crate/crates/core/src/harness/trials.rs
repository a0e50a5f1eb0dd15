use std::fs;
use std::path::Path;

use rand::Rng;

use crate::domain::{PhoneNumber, SimTime, MS_PER_DAY, MS_PER_SECOND};
use crate::simenv::rng::stream_rng;
use crate::simenv::{SimConfig, TraceKind, TraceRecord, World};

use super::report::{fold, TrialKind, TrialReport};
use super::{config, HarnessError};

const WORKLOAD_STREAM: u64 = 10;
const HOUR: SimTime = 3_600_000;

/// Everything a finished trial leaves behind.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub report: TrialReport,
    pub records: Vec<TraceRecord>,
    pub summary: String,
}

impl TrialOutcome {
    pub fn trace_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json());
            out.push('\n');
        }
        out
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n"
    }

    /// Writes `report.json`, `trace.ndjson` and `summary.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.report_json())?;
        fs::write(dir.join("trace.ndjson"), self.trace_ndjson())?;
        fs::write(dir.join("summary.txt"), &self.summary)?;
        Ok(())
    }
}

fn owner(cfg: &SimConfig) -> PhoneNumber {
    cfg.feeder
        .authorized
        .iter()
        .next()
        .cloned()
        .expect("validated config has an owner")
}

fn finish(kind: TrialKind, n: u64, mut world: World) -> TrialOutcome {
    world.close_trace();
    let cfg = world.config().clone();
    let records = world.trace().records().to_vec();
    let report = fold(
        kind,
        n,
        world.seed(),
        &config::digest(&cfg),
        &cfg.power,
        &records,
    );
    let summary = summarize(&report, &cfg);
    TrialOutcome {
        report,
        records,
        summary,
    }
}

fn summarize(r: &TrialReport, cfg: &SimConfig) -> String {
    let mut s = format!(
        "trial {} (seed {}, config {})\n",
        r.trial_name, r.seed, r.config_digest
    );
    s += &format!(
        "simulated time: {:.3} h\n",
        r.duration_ms as f64 / HOUR as f64
    );
    s += &format!("n = {}, success = {}", r.n, r.success_count);
    if r.n > 0 {
        s += &format!(" ({:.1}%)", 100.0 * r.success_count as f64 / r.n as f64);
    }
    s += &format!(
        "\nconfirmed = {}, lost messages = {}\n",
        r.confirmed_count, r.lost_messages
    );
    if let Some(l) = r.latency_ms {
        s += &format!(
            "round trip ms: min {} / p50 {} / p90 {} / max {}\n",
            l.min, l.p50, l.p90, l.max
        );
    }
    if let Some(d) = r.dispense {
        s += &format!(
            "dispense: {} cycles, mean {:.2} g, cv {:.4}, mean open {:.0} ms, empty {}\n",
            d.count, d.mean_g, d.cv, d.duration_ms_mean, d.empty
        );
    }
    s += &format!(
        "missed feeds = {}, alerts sent = {} ({} events)\n",
        r.missed_feeds, r.alerts_sent, r.alert_events
    );
    s += &format!(
        "energy: {:.3} mAh at the rail, {:.3} mAh from the battery\n",
        r.energy_mah, r.battery_energy_mah
    );
    s += &format!(
        "battery life at idle: {:.1} h per full charge\n",
        cfg.power.idle_endurance_h()
    );
    s
}

/// Sends `n` FEED commands from the first authorized number at random
/// 30 to 300 s intervals. Scheduled feeding is switched off and the hopper
/// is topped up whenever it runs low.
pub fn run_sms_trial(cfg: &SimConfig, n: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    if n == 0 {
        return Err(HarnessError::InvalidArgument("n must be at least 1".into()));
    }
    let mut cfg = cfg.clone();
    cfg.feeder.schedule.clear();
    let from = owner(&cfg);
    let body = format!("{} FEED", cfg.feeder.pin);
    let low_water = 4.0 * cfg.feeder.default_portion_g as f64;
    let mut world = World::new(cfg, seed)?;
    let mut rng = stream_rng(seed, WORKLOAD_STREAM);
    for _ in 0..n {
        if world.hopper().contents_g() < low_water {
            let capacity = world.hopper().capacity_g();
            world.refill(capacity);
        }
        world.phone_send(&from, &body)?;
        let gap = rng.random_range(30..=300) * MS_PER_SECOND;
        world.advance_by(gap)?;
    }
    world.advance_by(60 * MS_PER_SECOND)?;
    Ok(finish(TrialKind::Sms, n, world))
}

/// Runs `n` remote FEED cycles a minute apart, resending commands the
/// network loses. The hopper is not refilled.
pub fn run_dispense_trial(
    cfg: &SimConfig,
    n: u64,
    seed: u64,
) -> Result<TrialOutcome, HarnessError> {
    if n == 0 {
        return Err(HarnessError::InvalidArgument("n must be at least 1".into()));
    }
    let needed_g = n as f64 * 60.0;
    if cfg.hopper.initial_g < needed_g {
        return Err(HarnessError::InsufficientFood {
            needed_g,
            available_g: cfg.hopper.initial_g,
        });
    }
    let mut cfg = cfg.clone();
    cfg.feeder.schedule.clear();
    let from = owner(&cfg);
    let body = format!("{} FEED", cfg.feeder.pin);
    let mut world = World::new(cfg, seed)?;
    let mut cycles = 0;
    let mut attempts = 0;
    while cycles < n && attempts < 10 * n {
        attempts += 1;
        let mark = world.trace().len() as u64;
        world.phone_send(&from, &body)?;
        world.advance_by(60 * MS_PER_SECOND)?;
        cycles += world
            .trace()
            .since(mark)
            .iter()
            .filter(|r| r.kind == TraceKind::Dispense)
            .count() as u64;
    }
    Ok(finish(TrialKind::Dispense, n, world))
}

/// Scheduled feeds the calendar calls for in `[start, start + days)`.
pub fn expected_scheduled_feeds(cfg: &SimConfig, days: u64) -> u64 {
    let start = cfg.device.start_ms;
    let end = start + days * MS_PER_DAY;
    let first_day = start / MS_PER_DAY;
    (first_day..=first_day + days)
        .flat_map(|d| {
            cfg.feeder
                .schedule
                .iter()
                .map(move |e| d * MS_PER_DAY + e.millis_into_day())
        })
        .filter(|t| (start..end).contains(t))
        .count() as u64
}

/// Days on which the morning refill is skipped so the hopper runs low.
fn depletion_days(days: u64) -> std::ops::Range<u64> {
    if days >= 22 {
        days / 3..days / 3 + 11
    } else {
        0..0
    }
}

/// Month-scale unattended operation: the battery is recharged at 06:00 and,
/// when `refills` is set, the hopper is topped up at 07:00 every day except
/// during one stretch that lets the food run low.
pub fn run_endurance(
    cfg: &SimConfig,
    days: u64,
    seed: u64,
    refills: bool,
) -> Result<TrialOutcome, HarnessError> {
    if days == 0 {
        return Err(HarnessError::InvalidArgument(
            "days must be at least 1".into(),
        ));
    }
    let expected = expected_scheduled_feeds(cfg, days);
    let start = cfg.device.start_ms;
    let end = start + days * MS_PER_DAY;
    let skip = depletion_days(days);
    let mut world = World::new(cfg.clone(), seed)?;
    for d in 0..=days {
        let midnight = (start / MS_PER_DAY + d) * MS_PER_DAY;
        let recharge_at = midnight + 6 * HOUR;
        if recharge_at >= world.now() && recharge_at < end {
            world.advance_to(recharge_at)?;
            world.recharge();
        }
        let refill_at = midnight + 7 * HOUR;
        if refills && !skip.contains(&d) && refill_at >= world.now() && refill_at < end {
            world.advance_to(refill_at)?;
            let capacity = world.hopper().capacity_g();
            world.refill(capacity);
        }
    }
    world.advance_to(end - 1)?;
    Ok(finish(TrialKind::Endurance, expected, world))
}

/// A span of constant rail current.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PowerSegment {
    pub start_ms: SimTime,
    pub end_ms: SimTime,
    pub current_ma: f64,
}

/// Constant-current spans of the POWER records inside `[from, to)`.
pub fn power_segments(records: &[TraceRecord], from: SimTime, to: SimTime) -> Vec<PowerSegment> {
    let points: Vec<(SimTime, f64)> = records
        .iter()
        .filter(|r| r.kind == TraceKind::Power)
        .filter_map(|r| Some((r.at_ms, r.current_ma?)))
        .collect();
    let mut out = Vec::new();
    for (i, (at, ma)) in points.iter().enumerate() {
        let next = points.get(i + 1).map_or(to, |p| p.0);
        let (s, e) = ((*at).max(from), next.min(to));
        if e > s {
            out.push(PowerSegment {
                start_ms: s,
                end_ms: e,
                current_ma: *ma,
            });
        }
    }
    out
}

/// A current-versus-time profile with FEED commands sent at the given
/// offsets (seconds). Scheduled feeding is off and the network is lossless
/// so every requested feed shows up.
pub fn run_power_profile(
    cfg: &SimConfig,
    duration_s: u64,
    feed_at_s: &[u64],
    seed: u64,
) -> Result<(TrialOutcome, Vec<PowerSegment>), HarnessError> {
    let mut cfg = cfg.clone();
    cfg.feeder.schedule.clear();
    cfg.network.delivery_probability = 1.0;
    let from = owner(&cfg);
    let body = format!("{} FEED", cfg.feeder.pin);
    let start = cfg.device.start_ms;
    let end = start + duration_s * MS_PER_SECOND;
    let mut world = World::new(cfg, seed)?;
    let mut feeds: Vec<u64> = feed_at_s
        .iter()
        .copied()
        .filter(|t| *t < duration_s)
        .collect();
    feeds.sort_unstable();
    for t in &feeds {
        world.advance_to(start + t * MS_PER_SECOND)?;
        world.phone_send(&from, &body)?;
    }
    world.advance_to(end)?;
    let outcome = finish(TrialKind::Power, feeds.len() as u64, world);
    let segments = power_segments(&outcome.records, start, end);
    Ok((outcome, segments))
}

/// One trial invocation.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub kind: TrialKind,
    pub n: u64,
    pub days: u64,
    pub duration_s: u64,
    pub feed_at_s: Vec<u64>,
    pub refills: bool,
    pub seed: u64,
    pub config: SimConfig,
}

impl TrialSpec {
    pub fn new(kind: TrialKind, seed: u64) -> Self {
        TrialSpec {
            kind,
            n: 100,
            days: 30,
            duration_s: 600,
            feed_at_s: Vec::new(),
            refills: true,
            seed,
            config: SimConfig::default(),
        }
    }

    pub fn run(&self) -> Result<TrialOutcome, HarnessError> {
        let c = &self.config;
        match self.kind {
            TrialKind::Sms => run_sms_trial(c, self.n, self.seed),
            TrialKind::Dispense => run_dispense_trial(c, self.n, self.seed),
            TrialKind::Endurance => run_endurance(c, self.days, self.seed, self.refills),
            TrialKind::Power => {
                run_power_profile(c, self.duration_s, &self.feed_at_s, self.seed).map(|(o, _)| o)
            }
        }
    }
}

/// Runs independent trials on separate threads; results come back in
/// input order.
pub fn run_parallel(specs: &[TrialSpec]) -> Vec<Result<TrialOutcome, HarnessError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs.iter().map(|s| scope.spawn(move || s.run())).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial thread panicked"))
            .collect()
    })
}
