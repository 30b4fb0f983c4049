//! Time sources for the ledger's `wall_ns` column.

use std::time::Instant;

use merge_core::mpc::{Clock, Counters};

/// Monotonic wall clock.
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    start: Instant,
}

impl StdClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now_ns(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }
}

/// Synthetic network time: a fixed cost per byte plus a fixed latency per round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticNetwork {
    pub ns_per_byte: f64,
    pub ns_per_round: f64,
}

impl SyntheticNetwork {
    pub fn wall_ns(&self, c: &Counters) -> u64 {
        (c.bytes as f64 * self.ns_per_byte + c.rounds as f64 * self.ns_per_round).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_time_is_linear() {
        let net = SyntheticNetwork { ns_per_byte: 0.5, ns_per_round: 1000.0 };
        let c = Counters { bytes: 100, rounds: 3, op_count: 3, wall_ns: 0 };
        assert_eq!(net.wall_ns(&c), 3050);
    }

    #[test]
    fn std_clock_is_monotone() {
        let c = StdClock::new();
        let a = c.now_ns();
        assert!(c.now_ns() >= a);
    }
}
