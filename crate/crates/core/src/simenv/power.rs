use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::SimTime;

const UA_PER_MA: f64 = 1000.0;
const UAMS_PER_MAH: f64 = 1000.0 * 3_600_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pub controller_ma: f64,
    pub modem_idle_ma: f64,
    pub sensor_idle_ma: f64,
    pub servo_idle_ma: f64,
    pub regulator_overhead_ma: f64,
    pub modem_burst_ma: f64,
    pub modem_burst_ms: u64,
    pub servo_active_ma: f64,
    pub sensor_ping_ma: f64,
    pub sensor_ping_ms: u64,
    pub rail_voltage_v: f64,
    pub battery_voltage_v: f64,
    pub battery_capacity_mah: f64,
    pub converter_efficiency: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams {
            controller_ma: 45.0,
            modem_idle_ma: 20.0,
            sensor_idle_ma: 15.0,
            servo_idle_ma: 10.0,
            regulator_overhead_ma: 35.0,
            modem_burst_ma: 1800.0,
            modem_burst_ms: 300,
            servo_active_ma: 250.0,
            sensor_ping_ma: 10.0,
            sensor_ping_ms: 50,
            rail_voltage_v: 5.0,
            battery_voltage_v: 12.0,
            battery_capacity_mah: 1600.0,
            converter_efficiency: 0.85,
        }
    }
}

impl PowerParams {
    pub fn idle_ma(&self) -> f64 {
        self.controller_ma
            + self.modem_idle_ma
            + self.sensor_idle_ma
            + self.servo_idle_ma
            + self.regulator_overhead_ma
    }

    /// Charge drawn from the battery for a given charge at the rail.
    pub fn battery_side_mah(&self, rail_mah: f64) -> f64 {
        rail_mah * self.rail_voltage_v / (self.converter_efficiency * self.battery_voltage_v)
    }

    /// Hours a full pack lasts at the idle draw.
    pub fn idle_endurance_h(&self) -> f64 {
        self.battery_capacity_mah / self.battery_side_mah(self.idle_ma())
    }
}

fn to_ua(ma: f64) -> i64 {
    (ma * UA_PER_MA).round() as i64
}

/// A change in rail current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSample {
    pub at_ms: SimTime,
    pub current_ma: f64,
    pub battery_pct: f64,
}

/// Piecewise-constant rail current, integrated exactly in µA·ms.
///
/// Loads are recorded as step changes. [`PowerModel::settle`] moves the
/// integration cursor forward; steps may be added anywhere at or after it.
pub struct PowerModel {
    params: PowerParams,
    idle_ua: i64,
    steps: BTreeMap<SimTime, i64>,
    settled_at: SimTime,
    settled_ua: i64,
    charge_uams: i128,
    charge_at_recharge: i128,
}

impl PowerModel {
    pub fn new(params: PowerParams, start: SimTime) -> Self {
        let idle_ua = to_ua(params.idle_ma());
        PowerModel {
            params,
            idle_ua,
            steps: BTreeMap::new(),
            settled_at: start,
            settled_ua: idle_ua,
            charge_uams: 0,
            charge_at_recharge: 0,
        }
    }

    pub fn params(&self) -> &PowerParams {
        &self.params
    }

    fn step(&mut self, at: SimTime, delta_ua: i64) {
        let at = at.max(self.settled_at);
        *self.steps.entry(at).or_insert(0) += delta_ua;
    }

    /// Adds `ma` over `[from, until)`.
    pub fn add_load(&mut self, from: SimTime, until: SimTime, ma: f64) {
        if until <= from {
            return;
        }
        self.step(from, to_ua(ma));
        self.step(until, -to_ua(ma));
    }

    pub fn start_load(&mut self, at: SimTime, ma: f64) {
        self.step(at, to_ua(ma));
    }

    pub fn end_load(&mut self, at: SimTime, ma: f64) {
        self.step(at, -to_ua(ma));
    }

    pub fn modem_burst(&mut self, at: SimTime) {
        let p = &self.params;
        let (ma, ms) = (p.modem_burst_ma, p.modem_burst_ms);
        self.add_load(at, at + ms, ma);
    }

    pub fn sensor_ping(&mut self, at: SimTime) {
        let p = &self.params;
        let (ma, ms) = (p.sensor_ping_ma, p.sensor_ping_ms);
        self.add_load(at, at + ms, ma);
    }

    fn pct_for(&self, charge_uams: i128) -> f64 {
        let rail = (charge_uams - self.charge_at_recharge) as f64 / UAMS_PER_MAH;
        let used = self.params.battery_side_mah(rail);
        (100.0 * (1.0 - used / self.params.battery_capacity_mah)).clamp(0.0, 100.0)
    }

    /// Integrates up to `t` and returns every current change in `[settled, t)`.
    pub fn settle(&mut self, t: SimTime) -> Vec<PowerSample> {
        let mut out = Vec::new();
        if t < self.settled_at {
            return out;
        }
        let due: Vec<(SimTime, i64)> = self.steps.range(..t).map(|(k, v)| (*k, *v)).collect();
        for (at, delta) in due {
            self.steps.remove(&at);
            self.charge_uams += self.settled_ua as i128 * (at - self.settled_at) as i128;
            self.settled_at = at;
            if delta == 0 {
                continue;
            }
            self.settled_ua += delta;
            out.push(PowerSample {
                at_ms: at,
                current_ma: self.settled_ua as f64 / UA_PER_MA,
                battery_pct: self.pct_for(self.charge_uams),
            });
        }
        self.charge_uams += self.settled_ua as i128 * (t - self.settled_at) as i128;
        self.settled_at = t;
        out
    }

    pub fn settled_at(&self) -> SimTime {
        self.settled_at
    }

    pub fn current_ma(&self) -> f64 {
        self.settled_ua as f64 / UA_PER_MA
    }

    /// Rail charge since boot at the cursor.
    pub fn consumed_rail_mah(&self) -> f64 {
        self.charge_uams as f64 / UAMS_PER_MAH
    }

    pub fn battery_pct(&self) -> f64 {
        self.pct_for(self.charge_uams)
    }

    pub fn recharge(&mut self) {
        self.charge_at_recharge = self.charge_uams;
    }

    pub fn idle_ma(&self) -> f64 {
        self.idle_ua as f64 / UA_PER_MA
    }
}

/// Rail mAh of a piecewise-constant current given as change points.
///
/// `samples` must be sorted; the current before the first sample is
/// `initial_ma`.
pub fn integrate_rail_mah(
    initial_ma: f64,
    samples: &[PowerSample],
    from: SimTime,
    to: SimTime,
) -> f64 {
    if to <= from {
        return 0.0;
    }
    let mut current = to_ua(initial_ma);
    let mut cursor = from;
    let mut total: i128 = 0;
    for s in samples {
        if s.at_ms >= to {
            break;
        }
        if s.at_ms > cursor {
            total += current as i128 * (s.at_ms - cursor) as i128;
            cursor = s.at_ms;
        }
        current = to_ua(s.current_ma);
    }
    total += current as i128 * (to - cursor) as i128;
    total as f64 / UAMS_PER_MAH
}
