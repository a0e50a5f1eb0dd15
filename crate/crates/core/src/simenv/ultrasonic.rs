use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::SENSOR_MAX_RANGE_CM;
use crate::hal::UltrasonicPort;

/// Echo wait the ranger gives up after, in milliseconds.
pub const ECHO_TIMEOUT_MS: u64 = 38;

const NEAR_RANGE_CM: f64 = 200.0;

pub fn sound_speed_mps(temp_c: f64) -> f64 {
    331.3 + 0.606 * temp_c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltrasonicParams {
    pub temp_c: f64,
    pub misalignment_deg: f64,
    /// Noise sd up to 200 cm; it grows linearly to `far_noise_sd_cm` at 400 cm.
    pub noise_sd_cm: f64,
    pub far_noise_sd_cm: f64,
    pub noise_enabled: bool,
}

impl Default for UltrasonicParams {
    fn default() -> Self {
        UltrasonicParams {
            temp_c: 25.0,
            misalignment_deg: 0.0,
            noise_sd_cm: 0.3,
            far_noise_sd_cm: 2.0,
            noise_enabled: true,
        }
    }
}

impl UltrasonicParams {
    pub fn noise_sd_at(&self, distance_cm: f64) -> f64 {
        if distance_cm <= NEAR_RANGE_CM {
            return self.noise_sd_cm;
        }
        let f = ((distance_cm - NEAR_RANGE_CM) / (SENSOR_MAX_RANGE_CM - NEAR_RANGE_CM)).min(1.0);
        self.noise_sd_cm + f * (self.far_noise_sd_cm - self.noise_sd_cm)
    }

    /// Zero inside 20 degrees, 0.9 at 30, certain at 45 and beyond.
    pub fn timeout_probability(&self) -> f64 {
        let a = self.misalignment_deg.abs();
        if a <= 20.0 {
            0.0
        } else if a <= 30.0 {
            0.9 * (a - 20.0) / 10.0
        } else if a < 45.0 {
            0.9 + 0.1 * (a - 30.0) / 15.0
        } else {
            1.0
        }
    }
}

/// HC-SR04 class ranger looking down into the hopper.
pub struct UltrasonicModel {
    params: UltrasonicParams,
    true_distance_cm: f64,
    rng: ChaCha8Rng,
}

impl UltrasonicModel {
    pub fn new(params: UltrasonicParams, rng: ChaCha8Rng) -> Self {
        UltrasonicModel {
            params,
            true_distance_cm: 0.0,
            rng,
        }
    }

    pub fn params(&self) -> &UltrasonicParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut UltrasonicParams {
        &mut self.params
    }

    pub fn set_true_distance(&mut self, cm: f64) {
        self.true_distance_cm = cm;
    }

    pub fn true_distance_cm(&self) -> f64 {
        self.true_distance_cm
    }

    /// Round-trip time of flight for a distance at the configured temperature.
    pub fn echo_time_us(&self, distance_cm: f64) -> f64 {
        2.0 * distance_cm / 100.0 / sound_speed_mps(self.params.temp_c) * 1e6
    }
}

impl UltrasonicPort for UltrasonicModel {
    fn ping(&mut self) -> Option<f64> {
        // both draws happen on every ping so the stream stays aligned
        let lost = self.rng.random::<f64>() < self.params.timeout_probability();
        let z: f64 = Normal::new(0.0, 1.0)
            .expect("unit normal")
            .sample(&mut self.rng);
        let d = self.true_distance_cm;
        if lost || d > SENSOR_MAX_RANGE_CM {
            return None;
        }
        let noise = if self.params.noise_enabled {
            z * self.params.noise_sd_at(d)
        } else {
            0.0
        };
        Some(self.echo_time_us((d + noise).max(0.0)))
    }
}
