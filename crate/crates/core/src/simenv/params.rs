use crate::domain::{DomainError, FeederConfig, PhoneNumber, SimTime};

use super::{HopperParams, NetworkParams, PowerParams, UltrasonicParams};

/// Device-side constants that are not part of the feeder's own configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    pub number: PhoneNumber,
    /// Time from a message reaching the modem to the firmware acting on it.
    pub processing_ms: u64,
    /// Commands the modem ignores after power-up.
    pub modem_silent_replies: u32,
    pub start_ms: SimTime,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            number: PhoneNumber::canonicalize("+8801900000001").expect("static number"),
            processing_ms: 500,
            modem_silent_replies: 0,
            start_ms: 0,
        }
    }
}

/// Everything a simulated world is built from, apart from the seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimConfig {
    pub feeder: FeederConfig,
    pub device: DeviceParams,
    pub network: NetworkParams,
    pub hopper: HopperParams,
    pub ultrasonic: UltrasonicParams,
    pub power: PowerParams,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        self.feeder.validate()?;
        let fail = |msg: &str| Err(DomainError::InvalidConfig(msg.to_string()));
        let n = &self.network;
        if !(0.0..=1.0).contains(&n.delivery_probability) {
            return fail("delivery probability must be in [0, 1]");
        }
        if !(n.latency_sd_ms >= 0.0
            && n.latency_min_ms as f64 <= n.latency_mean_ms
            && n.latency_mean_ms <= n.latency_max_ms as f64)
        {
            return fail("need latency sd >= 0 and min <= mean <= max");
        }
        let h = &self.hopper;
        if !(h.capacity_g > 0.0 && (0.0..=h.capacity_g).contains(&h.initial_g)) {
            return fail("need capacity > 0 and 0 <= initial <= capacity");
        }
        if !(h.flow_rate_gps > 0.0 && h.dispense_cv >= 0.0 && h.bulk_density_g_per_cm > 0.0) {
            return fail("hopper flow and density must be positive, cv non-negative");
        }
        let u = &self.ultrasonic;
        if !(u.temp_c > -273.0 && u.noise_sd_cm >= 0.0 && u.far_noise_sd_cm >= 0.0) {
            return fail("ultrasonic temperature or noise out of range");
        }
        let p = &self.power;
        let currents = [
            p.controller_ma,
            p.modem_idle_ma,
            p.sensor_idle_ma,
            p.servo_idle_ma,
            p.regulator_overhead_ma,
            p.modem_burst_ma,
            p.servo_active_ma,
            p.sensor_ping_ma,
        ];
        if currents.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return fail("currents must be non-negative");
        }
        if !(p.rail_voltage_v > 0.0
            && p.battery_voltage_v > 0.0
            && p.battery_capacity_mah > 0.0
            && p.converter_efficiency > 0.0
            && p.converter_efficiency <= 1.0)
        {
            return fail("battery parameters out of range");
        }
        Ok(())
    }
}
