use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DispenseResult, SimTime};

use super::rng::truncated_normal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopperParams {
    pub capacity_g: f64,
    pub initial_g: f64,
    pub flow_rate_gps: f64,
    /// Relative standard deviation of one dispense, truncated at three sigma.
    pub dispense_cv: f64,
    pub bulk_density_g_per_cm: f64,
}

impl Default for HopperParams {
    fn default() -> Self {
        HopperParams {
            capacity_g: 2000.0,
            initial_g: 2000.0,
            flow_rate_gps: 25.0,
            dispense_cv: 0.0267,
            bulk_density_g_per_cm: 2000.0 / 28.0,
        }
    }
}

fn to_mg(g: f64) -> u64 {
    (g * 1000.0).round().max(0.0) as u64
}

fn to_g(mg: u64) -> f64 {
    mg as f64 / 1000.0
}

/// Food store and gate flow. Mass is kept in whole milligrams so the
/// conservation identity holds exactly.
pub struct HopperModel {
    params: HopperParams,
    rng: ChaCha8Rng,
    capacity_mg: u64,
    initial_mg: u64,
    contents_mg: u64,
    dispensed_mg: u64,
    refilled_mg: u64,
}

impl HopperModel {
    pub fn new(params: HopperParams, rng: ChaCha8Rng) -> Self {
        let capacity_mg = to_mg(params.capacity_g);
        let initial_mg = to_mg(params.initial_g).min(capacity_mg);
        HopperModel {
            params,
            rng,
            capacity_mg,
            initial_mg,
            contents_mg: initial_mg,
            dispensed_mg: 0,
            refilled_mg: 0,
        }
    }

    pub fn params(&self) -> &HopperParams {
        &self.params
    }

    /// Food that leaves the gate for an opening of `open_ms`.
    pub fn dispense(&mut self, open_ms: u64, now: SimTime) -> DispenseResult {
        let p = &self.params;
        let nominal_g = p.flow_rate_gps * open_ms as f64 / 1000.0;
        let sigma = p.dispense_cv;
        let eps = if sigma > 0.0 {
            truncated_normal(&mut self.rng, 0.0, sigma, -3.0 * sigma, 3.0 * sigma)
        } else {
            0.0
        };
        let mg = to_mg(nominal_g * (1.0 + eps)).min(self.contents_mg);
        self.contents_mg -= mg;
        self.dispensed_mg += mg;
        DispenseResult {
            requested_g: nominal_g,
            dispensed_g: to_g(mg),
            duration_ms: open_ms,
            completed_at: now,
        }
    }

    /// Adds food up to capacity; returns the grams actually added.
    pub fn refill(&mut self, grams: f64) -> f64 {
        let added = to_mg(grams).min(self.capacity_mg - self.contents_mg);
        self.contents_mg += added;
        self.refilled_mg += added;
        to_g(added)
    }

    pub fn contents_g(&self) -> f64 {
        to_g(self.contents_mg)
    }

    pub fn capacity_g(&self) -> f64 {
        to_g(self.capacity_mg)
    }

    pub fn initial_g(&self) -> f64 {
        to_g(self.initial_mg)
    }

    pub fn total_dispensed_g(&self) -> f64 {
        to_g(self.dispensed_mg)
    }

    pub fn total_refilled_g(&self) -> f64 {
        to_g(self.refilled_mg)
    }

    /// Exact mass identity: contents + dispensed == initial + refilled.
    pub fn mass_balanced(&self) -> bool {
        self.contents_mg + self.dispensed_mg == self.initial_mg + self.refilled_mg
    }

    pub fn fill_height_cm(&self) -> f64 {
        self.contents_g() / self.params.bulk_density_g_per_cm
    }
}
