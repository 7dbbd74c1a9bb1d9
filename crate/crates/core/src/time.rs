use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Logical timestamp in whole microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: f64) -> SimTime {
        if secs <= 0.0 {
            SimTime(0)
        } else {
            SimTime((secs * 1e6).round() as u64)
        }
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.secs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        assert_eq!(SimTime::from_secs(1.5).0, 1_500_000);
        assert_eq!(SimTime::from_secs(-3.0), SimTime::ZERO);
        assert!((SimTime(275_000).secs() - 0.275).abs() < 1e-12);
    }
}
