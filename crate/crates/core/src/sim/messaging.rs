//! Reliable messaging with sampled latency and per-destination FIFO delivery.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::time::SimTime;

pub const LATENCY_MIN: f64 = 0.05;
pub const LATENCY_MAX: f64 = 0.5;

pub fn sample_latency<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(LATENCY_MIN..=LATENCY_MAX)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Messaging {
    last_delivery: BTreeMap<String, SimTime>,
    pub sent: u64,
}

impl Messaging {
    pub fn new() -> Self {
        Messaging::default()
    }

    /// Schedules a delivery to `to`. Never dropped; never overtakes an earlier send to the same endpoint.
    pub fn send_message<R: Rng>(&mut self, _from: &str, to: &str, now: SimTime, rng: &mut R) -> SimTime {
        let latency = sample_latency(rng);
        self.deliver(to, now, latency)
    }

    /// Like `send_message` with a latency the caller already drew.
    pub fn deliver(&mut self, to: &str, now: SimTime, latency: f64) -> SimTime {
        let sampled = now + SimTime::from_secs(latency);
        let last = self.last_delivery.entry(to.to_string()).or_insert(SimTime::ZERO);
        let at = sampled.max(*last);
        *last = at;
        self.sent += 1;
        at
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn latency_within_bounds_and_fifo() {
        let mut m = Messaging::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut prev = SimTime::ZERO;
        for _ in 0..200 {
            let at = m.send_message("robot_a", "robot_b", SimTime::ZERO, &mut rng);
            assert!(at >= prev);
            assert!(at <= SimTime::from_secs(LATENCY_MAX));
            prev = at;
        }
        let other = m.send_message("robot_a", "robot_c", SimTime::ZERO, &mut rng);
        assert!(other >= SimTime::from_secs(LATENCY_MIN));
    }
}
