use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::simenv::{PowerParams, TraceKind, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Sms,
    Dispense,
    Endurance,
    Power,
}

impl TrialKind {
    pub fn name(self) -> &'static str {
        match self {
            TrialKind::Sms => "sms",
            TrialKind::Dispense => "dispense",
            TrialKind::Endurance => "endurance",
            TrialKind::Power => "power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub min: u64,
    pub p50: u64,
    pub p90: u64,
    pub max: u64,
}

impl LatencySummary {
    /// Nearest-rank quantiles; `None` for an empty sample.
    pub fn of(samples: &[u64]) -> Option<Self> {
        let mut s = samples.to_vec();
        s.sort_unstable();
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Some(LatencySummary {
            min: *s.first()?,
            p50: rank(0.5),
            p90: rank(0.9),
            max: *s.last()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispenseSummary {
    pub count: u64,
    pub mean_g: f64,
    /// Sample standard deviation over the mean.
    pub cv: f64,
    pub duration_ms_mean: f64,
    /// Cycles that released no food because the hopper was empty.
    pub empty: u64,
}

impl DispenseSummary {
    pub fn of(grams: &[f64], durations: &[u64]) -> Option<Self> {
        if grams.is_empty() {
            return None;
        }
        let n = grams.len() as f64;
        let mean = grams.iter().sum::<f64>() / n;
        let var = if grams.len() > 1 {
            grams.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        Some(DispenseSummary {
            count: grams.len() as u64,
            mean_g: mean,
            cv,
            duration_ms_mean: durations.iter().sum::<u64>() as f64 / durations.len() as f64,
            empty: grams.iter().filter(|g| **g == 0.0).count() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial_name: String,
    pub n: u64,
    pub success_count: u64,
    /// Commands whose confirmation reached the owner.
    pub confirmed_count: u64,
    pub lost_messages: u64,
    pub latency_ms: Option<LatencySummary>,
    pub dispense: Option<DispenseSummary>,
    pub missed_feeds: u64,
    /// Low-food SMS handed to the network.
    pub alerts_sent: u64,
    pub alert_events: u64,
    /// Charge drawn at the 5 V rail.
    pub energy_mah: f64,
    pub battery_energy_mah: f64,
    pub duration_ms: u64,
    pub seed: u64,
    pub config_digest: String,
}

/// Rail mAh of the POWER records up to `end`, starting from the first one.
pub fn rail_energy_mah(records: &[TraceRecord], end: u64) -> f64 {
    let mut points = records
        .iter()
        .filter(|r| r.kind == TraceKind::Power)
        .filter_map(|r| Some((r.at_ms, (r.current_ma? * 1000.0).round() as i128)));
    let Some((mut at, mut ua)) = points.next() else {
        return 0.0;
    };
    let mut total: i128 = 0;
    for (t, next) in points.chain(std::iter::once((end, 0))) {
        let t = t.min(end);
        if t > at {
            total += ua * (t - at) as i128;
            at = t;
        }
        ua = next;
    }
    total as f64 / 3.6e9
}

/// Builds a report purely from trace records.
///
/// `n` is the trial size: commands sent, cycles run, or (for endurance)
/// the number of scheduled feeds the calendar calls for.
pub fn fold(
    kind: TrialKind,
    n: u64,
    seed: u64,
    config_digest: &str,
    power: &PowerParams,
    records: &[TraceRecord],
) -> TrialReport {
    let mut sent_at: BTreeMap<u64, u64> = BTreeMap::new();
    let mut executed: BTreeSet<u64> = BTreeSet::new();
    let mut confirmed: BTreeMap<u64, u64> = BTreeMap::new();
    let mut grams = Vec::new();
    let mut durations = Vec::new();
    let mut scheduled = 0u64;
    let mut lost = 0u64;
    let mut alerts_sent = 0u64;
    let mut alert_events = 0u64;
    let start = records.first().map_or(0, |r| r.at_ms);
    let mut end = start;

    for r in records {
        end = end.max(r.at_ms);
        match r.kind {
            TraceKind::PhoneSend => {
                if let Some(id) = r.msg_id {
                    sent_at.insert(id, r.at_ms);
                }
            }
            TraceKind::FeedRemote => {
                if let Some(id) = r.msg_id {
                    executed.insert(id);
                }
            }
            TraceKind::PhoneRecv if r.detail.starts_with("OK: FED") => {
                if let Some(id) = r.msg_id {
                    confirmed.entry(id).or_insert(r.at_ms);
                }
            }
            TraceKind::FeedScheduled => scheduled += 1,
            TraceKind::Dispense => {
                grams.push(r.grams.unwrap_or(0.0));
                durations.push(r.duration_ms.unwrap_or(0));
            }
            TraceKind::SmsLost => lost += 1,
            TraceKind::SmsOut if r.detail.starts_with("ALERT:") => alerts_sent += 1,
            TraceKind::Alert => alert_events += 1,
            _ => {}
        }
    }

    let commands_executed = executed
        .iter()
        .filter(|id| sent_at.contains_key(id))
        .count() as u64;
    let latencies: Vec<u64> = confirmed
        .iter()
        .filter_map(|(id, at)| Some(at - sent_at.get(id)?))
        .collect();
    let success_count = match kind {
        TrialKind::Sms => commands_executed,
        TrialKind::Dispense => grams.iter().filter(|g| **g > 0.0).count() as u64,
        TrialKind::Endurance => scheduled,
        TrialKind::Power => grams.len() as u64,
    };
    let energy_mah = rail_energy_mah(records, end);
    TrialReport {
        trial_name: kind.name().to_string(),
        n,
        success_count: success_count.min(n),
        confirmed_count: latencies.len() as u64,
        lost_messages: lost,
        latency_ms: LatencySummary::of(&latencies),
        dispense: DispenseSummary::of(&grams, &durations),
        missed_feeds: match kind {
            TrialKind::Endurance => n.saturating_sub(scheduled),
            _ => 0,
        },
        alerts_sent,
        alert_events,
        energy_mah,
        battery_energy_mah: power.battery_side_mah(energy_mah),
        duration_ms: end - start,
        seed,
        config_digest: config_digest.to_string(),
    }
}
