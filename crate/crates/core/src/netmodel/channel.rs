//! Classical signalling delays along the chain.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    /// Length of every elementary link in metres.
    pub link_length_m: f64,
    /// Signal propagation speed in metres per second.
    pub speed_mps: f64,
}

impl Default for Channel {
    fn default() -> Self {
        Channel { link_length_m: 15_000.0, speed_mps: 2.0e8 }
    }
}

impl Channel {
    /// Time for a message to cross one link.
    pub fn hop_latency(&self) -> SimTime {
        self.link_length_m / self.speed_mps
    }

    /// Delay between an attempt and its herald at the two nodes, with the
    /// heralding station at the middle of the link.
    pub fn herald_delay(&self) -> SimTime {
        self.hop_latency() / 2.0
    }

    /// Latency of a hop-by-hop message from `from` to `to`.
    pub fn path_latency(&self, from: usize, to: usize) -> SimTime {
        from.abs_diff(to) as f64 * self.hop_latency()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_latencies() {
        let c = Channel::default();
        assert!((c.hop_latency() - 75e-6).abs() < 1e-15);
        assert!((c.herald_delay() - 37.5e-6).abs() < 1e-15);
        assert!((c.path_latency(0, 8) - 600e-6).abs() < 1e-15);
        assert_eq!(c.path_latency(5, 2), c.path_latency(2, 5));
    }
}
