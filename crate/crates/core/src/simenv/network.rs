use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng::truncated_normal;

/// Per-hop cellular delivery model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub delivery_probability: f64,
    pub latency_mean_ms: f64,
    pub latency_sd_ms: f64,
    pub latency_min_ms: u64,
    pub latency_max_ms: u64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            delivery_probability: 0.98,
            latency_mean_ms: 4000.0,
            latency_sd_ms: 500.0,
            latency_min_ms: 3000,
            latency_max_ms: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Delivered { latency_ms: u64 },
    Dropped,
}

pub struct GsmNetworkModel {
    params: NetworkParams,
    rng: ChaCha8Rng,
    delivered: u64,
    dropped: u64,
}

impl GsmNetworkModel {
    pub fn new(params: NetworkParams, rng: ChaCha8Rng) -> Self {
        GsmNetworkModel {
            params,
            rng,
            delivered: 0,
            dropped: 0,
        }
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    /// Decides the fate of one message hop.
    pub fn submit(&mut self) -> DeliveryOutcome {
        let u: f64 = self.rng.random();
        if u < self.params.delivery_probability {
            self.delivered += 1;
            DeliveryOutcome::Delivered {
                latency_ms: self.sample_latency(),
            }
        } else {
            self.dropped += 1;
            DeliveryOutcome::Dropped
        }
    }

    pub fn sample_latency(&mut self) -> u64 {
        let p = &self.params;
        let x = truncated_normal(
            &mut self.rng,
            p.latency_mean_ms,
            p.latency_sd_ms,
            p.latency_min_ms as f64,
            p.latency_max_ms as f64,
        );
        (x.round() as u64).clamp(p.latency_min_ms, p.latency_max_ms)
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
