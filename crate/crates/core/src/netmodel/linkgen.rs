//! Heralded elementary-link generation.
//!
//! Each link fires attempts every `attempt_period`, each succeeding with
//! `success_prob`. Instead of simulating every failed attempt, the generator
//! jumps straight to the next success.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub attempt_period: SimTime,
    pub success_prob: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel { attempt_period: 10e-6, success_prob: 0.1 }
    }
}

impl LinkModel {
    /// Number of attempts up to and including the next success (at least 1).
    pub fn attempts_until_success<R: Rng>(&self, rng: &mut R) -> u64 {
        if self.success_prob >= 1.0 {
            return 1;
        }
        // Inverse CDF of the geometric distribution on {1, 2, ...}.
        let u: f64 = 1.0 - rng.random::<f64>();
        (u.ln() / (1.0 - self.success_prob).ln()).ceil().max(1.0) as u64
    }

    /// Delay from now to the next successful attempt.
    pub fn next_success<R: Rng>(&self, rng: &mut R) -> SimTime {
        self.attempts_until_success(rng) as f64 * self.attempt_period
    }

    pub fn mean_interval(&self) -> SimTime {
        self.attempt_period / self.success_prob
    }
}

/// Generation status of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkStatus {
    /// Waiting for the tunnel to reach both ends.
    #[default]
    Idle,
    Running,
    /// A success found a full memory bank; resumes once a slot frees.
    Blocked,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn geometric_mean_matches() {
        let m = LinkModel::default();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let n = 200_000;
        let draws: Vec<u64> = (0..n).map(|_| m.attempts_until_success(&mut rng)).collect();
        assert!(draws.iter().all(|&k| k >= 1));
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        // Var = (1 - p) / p^2 = 90.
        let se = (90.0 / n as f64).sqrt();
        assert!((mean - 10.0).abs() < 4.0 * se, "mean = {mean}");
        let ones = draws.iter().filter(|&&k| k == 1).count() as f64 / n as f64;
        assert!((ones - 0.1).abs() < 0.005);
    }

    #[test]
    fn certain_success_takes_one_attempt() {
        let m = LinkModel { attempt_period: 1e-5, success_prob: 1.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_eq!(m.next_success(&mut rng), 1e-5);
    }
}
