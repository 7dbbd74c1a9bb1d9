//! Named, independent random substreams derived from one master seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Latency,
    Durations,
    Failures,
    Arrivals,
    Supervisor,
    /// Architecture-internal choices such as baseline negotiation loops.
    Coordination,
}

impl Stream {
    pub const ALL: [Stream; 6] = [
        Stream::Latency,
        Stream::Durations,
        Stream::Failures,
        Stream::Arrivals,
        Stream::Supervisor,
        Stream::Coordination,
    ];

    fn index(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone)]
pub struct RngStreams {
    pub master_seed: u64,
    streams: Vec<ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        let streams = Stream::ALL
            .iter()
            .map(|s| {
                let mut r = ChaCha8Rng::seed_from_u64(master_seed);
                r.set_stream(s.index());
                r
            })
            .collect();
        RngStreams { master_seed, streams }
    }

    pub fn get(&mut self, s: Stream) -> &mut ChaCha8Rng {
        &mut self.streams[s.index() as usize]
    }

    pub fn latency(&mut self) -> &mut ChaCha8Rng {
        self.get(Stream::Latency)
    }

    pub fn durations(&mut self) -> &mut ChaCha8Rng {
        self.get(Stream::Durations)
    }

    pub fn failures(&mut self) -> &mut ChaCha8Rng {
        self.get(Stream::Failures)
    }

    pub fn arrivals(&mut self) -> &mut ChaCha8Rng {
        self.get(Stream::Arrivals)
    }

    pub fn supervisor(&mut self) -> &mut ChaCha8Rng {
        self.get(Stream::Supervisor)
    }

    pub fn coordination(&mut self) -> &mut ChaCha8Rng {
        self.get(Stream::Coordination)
    }

    pub fn uniform(&mut self, s: Stream, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.get(s).gen_range(lo..hi)
        } else {
            lo
        }
    }

    pub fn chance(&mut self, s: Stream, p: f64) -> bool {
        self.get(s).gen::<f64>() < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent() {
        let mut a = RngStreams::new(7);
        let mut b = RngStreams::new(7);
        for _ in 0..100 {
            b.failures().gen::<u64>();
        }
        let xs: Vec<f64> = (0..10).map(|_| a.uniform(Stream::Latency, 0.0, 1.0)).collect();
        let ys: Vec<f64> = (0..10).map(|_| b.uniform(Stream::Latency, 0.0, 1.0)).collect();
        assert_eq!(xs, ys);
        assert_ne!(a.latency().gen::<u64>(), a.durations().gen::<u64>());
    }
}
