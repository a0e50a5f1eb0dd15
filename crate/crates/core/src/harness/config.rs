//! Flat `key = value` config files.
//!
//! One setting per line, `#` starts a comment, unknown keys are errors and
//! omitted keys keep their defaults. Floats are written in shortest
//! round-trip form, so `parse(render(c)) == c` exactly.

use std::fmt::Display;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::domain::{PhoneNumber, TimeOfDay};
use crate::simenv::SimConfig;

use super::HarnessError;

fn join<T: Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Canonical text form of a config; every key is present.
pub fn render(cfg: &SimConfig) -> String {
    let f = &cfg.feeder;
    let d = &cfg.device;
    let n = &cfg.network;
    let h = &cfg.hopper;
    let u = &cfg.ultrasonic;
    let p = &cfg.power;
    let lines: Vec<(&str, String)> = vec![
        ("feeder.pin", f.pin.clone()),
        ("feeder.authorized", join(&f.authorized)),
        ("feeder.default_portion_g", f.default_portion_g.to_string()),
        ("feeder.schedule", join(&f.schedule)),
        (
            "feeder.food_check_period_s",
            f.food_check_period_s.to_string(),
        ),
        (
            "feeder.low_level_threshold_pct",
            f.low_level_threshold_pct.to_string(),
        ),
        (
            "feeder.alert_hysteresis_pct",
            f.alert_hysteresis_pct.to_string(),
        ),
        (
            "feeder.container_height_cm",
            f.container_height_cm.to_string(),
        ),
        (
            "feeder.sensor_deadzone_cm",
            f.sensor_deadzone_cm.to_string(),
        ),
        (
            "feeder.assumed_sound_speed_mps",
            f.assumed_sound_speed_mps.to_string(),
        ),
        (
            "feeder.flow_calibration_gps",
            f.flow_calibration_gps.to_string(),
        ),
        ("device.number", d.number.to_string()),
        ("device.processing_ms", d.processing_ms.to_string()),
        (
            "device.modem_silent_replies",
            d.modem_silent_replies.to_string(),
        ),
        ("device.start_ms", d.start_ms.to_string()),
        (
            "network.delivery_probability",
            n.delivery_probability.to_string(),
        ),
        ("network.latency_mean_ms", n.latency_mean_ms.to_string()),
        ("network.latency_sd_ms", n.latency_sd_ms.to_string()),
        ("network.latency_min_ms", n.latency_min_ms.to_string()),
        ("network.latency_max_ms", n.latency_max_ms.to_string()),
        ("hopper.capacity_g", h.capacity_g.to_string()),
        ("hopper.initial_g", h.initial_g.to_string()),
        ("hopper.flow_rate_gps", h.flow_rate_gps.to_string()),
        ("hopper.dispense_cv", h.dispense_cv.to_string()),
        (
            "hopper.bulk_density_g_per_cm",
            h.bulk_density_g_per_cm.to_string(),
        ),
        ("ultrasonic.temp_c", u.temp_c.to_string()),
        (
            "ultrasonic.misalignment_deg",
            u.misalignment_deg.to_string(),
        ),
        ("ultrasonic.noise_sd_cm", u.noise_sd_cm.to_string()),
        ("ultrasonic.far_noise_sd_cm", u.far_noise_sd_cm.to_string()),
        ("ultrasonic.noise_enabled", u.noise_enabled.to_string()),
        ("power.controller_ma", p.controller_ma.to_string()),
        ("power.modem_idle_ma", p.modem_idle_ma.to_string()),
        ("power.sensor_idle_ma", p.sensor_idle_ma.to_string()),
        ("power.servo_idle_ma", p.servo_idle_ma.to_string()),
        (
            "power.regulator_overhead_ma",
            p.regulator_overhead_ma.to_string(),
        ),
        ("power.modem_burst_ma", p.modem_burst_ma.to_string()),
        ("power.modem_burst_ms", p.modem_burst_ms.to_string()),
        ("power.servo_active_ma", p.servo_active_ma.to_string()),
        ("power.sensor_ping_ma", p.sensor_ping_ma.to_string()),
        ("power.sensor_ping_ms", p.sensor_ping_ms.to_string()),
        ("power.rail_voltage_v", p.rail_voltage_v.to_string()),
        ("power.battery_voltage_v", p.battery_voltage_v.to_string()),
        (
            "power.battery_capacity_mah",
            p.battery_capacity_mah.to_string(),
        ),
        (
            "power.converter_efficiency",
            p.converter_efficiency.to_string(),
        ),
    ];
    let mut out = String::new();
    for (k, v) in lines {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    }
    out
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, HarnessError> {
    raw.parse().map_err(|_| HarnessError::Config {
        line,
        message: format!("bad value {raw:?} for {key}"),
    })
}

fn list<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>, HarnessError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(line, key, s))
        .collect()
}

/// Applies a config text on top of the defaults and validates the result.
pub fn parse(text: &str) -> Result<SimConfig, HarnessError> {
    let mut cfg = SimConfig::default();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, raw) = content
            .split_once('=')
            .ok_or_else(|| HarnessError::Config {
                line,
                message: "expected key = value".into(),
            })?;
        let (key, raw) = (key.trim(), raw.trim());
        let f = &mut cfg.feeder;
        let d = &mut cfg.device;
        let n = &mut cfg.network;
        let h = &mut cfg.hopper;
        let u = &mut cfg.ultrasonic;
        let p = &mut cfg.power;
        match key {
            "feeder.pin" => f.pin = raw.to_string(),
            "feeder.authorized" => {
                f.authorized = list::<PhoneNumber>(line, key, raw)?.into_iter().collect()
            }
            "feeder.default_portion_g" => f.default_portion_g = value(line, key, raw)?,
            "feeder.schedule" => f.schedule = list::<TimeOfDay>(line, key, raw)?,
            "feeder.food_check_period_s" => f.food_check_period_s = value(line, key, raw)?,
            "feeder.low_level_threshold_pct" => f.low_level_threshold_pct = value(line, key, raw)?,
            "feeder.alert_hysteresis_pct" => f.alert_hysteresis_pct = value(line, key, raw)?,
            "feeder.container_height_cm" => f.container_height_cm = value(line, key, raw)?,
            "feeder.sensor_deadzone_cm" => f.sensor_deadzone_cm = value(line, key, raw)?,
            "feeder.assumed_sound_speed_mps" => f.assumed_sound_speed_mps = value(line, key, raw)?,
            "feeder.flow_calibration_gps" => f.flow_calibration_gps = value(line, key, raw)?,
            "device.number" => d.number = value(line, key, raw)?,
            "device.processing_ms" => d.processing_ms = value(line, key, raw)?,
            "device.modem_silent_replies" => d.modem_silent_replies = value(line, key, raw)?,
            "device.start_ms" => d.start_ms = value(line, key, raw)?,
            "network.delivery_probability" => n.delivery_probability = value(line, key, raw)?,
            "network.latency_mean_ms" => n.latency_mean_ms = value(line, key, raw)?,
            "network.latency_sd_ms" => n.latency_sd_ms = value(line, key, raw)?,
            "network.latency_min_ms" => n.latency_min_ms = value(line, key, raw)?,
            "network.latency_max_ms" => n.latency_max_ms = value(line, key, raw)?,
            "hopper.capacity_g" => h.capacity_g = value(line, key, raw)?,
            "hopper.initial_g" => h.initial_g = value(line, key, raw)?,
            "hopper.flow_rate_gps" => h.flow_rate_gps = value(line, key, raw)?,
            "hopper.dispense_cv" => h.dispense_cv = value(line, key, raw)?,
            "hopper.bulk_density_g_per_cm" => h.bulk_density_g_per_cm = value(line, key, raw)?,
            "ultrasonic.temp_c" => u.temp_c = value(line, key, raw)?,
            "ultrasonic.misalignment_deg" => u.misalignment_deg = value(line, key, raw)?,
            "ultrasonic.noise_sd_cm" => u.noise_sd_cm = value(line, key, raw)?,
            "ultrasonic.far_noise_sd_cm" => u.far_noise_sd_cm = value(line, key, raw)?,
            "ultrasonic.noise_enabled" => u.noise_enabled = value(line, key, raw)?,
            "power.controller_ma" => p.controller_ma = value(line, key, raw)?,
            "power.modem_idle_ma" => p.modem_idle_ma = value(line, key, raw)?,
            "power.sensor_idle_ma" => p.sensor_idle_ma = value(line, key, raw)?,
            "power.servo_idle_ma" => p.servo_idle_ma = value(line, key, raw)?,
            "power.regulator_overhead_ma" => p.regulator_overhead_ma = value(line, key, raw)?,
            "power.modem_burst_ma" => p.modem_burst_ma = value(line, key, raw)?,
            "power.modem_burst_ms" => p.modem_burst_ms = value(line, key, raw)?,
            "power.servo_active_ma" => p.servo_active_ma = value(line, key, raw)?,
            "power.sensor_ping_ma" => p.sensor_ping_ma = value(line, key, raw)?,
            "power.sensor_ping_ms" => p.sensor_ping_ms = value(line, key, raw)?,
            "power.rail_voltage_v" => p.rail_voltage_v = value(line, key, raw)?,
            "power.battery_voltage_v" => p.battery_voltage_v = value(line, key, raw)?,
            "power.battery_capacity_mah" => p.battery_capacity_mah = value(line, key, raw)?,
            "power.converter_efficiency" => p.converter_efficiency = value(line, key, raw)?,
            _ => {
                return Err(HarnessError::Config {
                    line,
                    message: format!("unknown key {key:?}"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// First 16 hex digits of the SHA-256 of the canonical rendering.
pub fn digest(cfg: &SimConfig) -> String {
    let hash = Sha256::digest(render(cfg).as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
