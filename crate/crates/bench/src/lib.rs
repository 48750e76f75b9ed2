//! Fixtures shared by the benchmarks.

use repeater_core::belldiag::{make_werner, BellCoeffs};
use repeater_core::scenario::{preset, Scenario};

pub fn werner_pair() -> (BellCoeffs, BellCoeffs) {
    (make_werner(0.95).unwrap(), make_werner(0.9).unwrap())
}

/// A built-in preset trimmed to `pairs` deliveries.
pub fn small_scenario(name: &str, pairs: u64) -> Scenario {
    let mut s = preset(name).expect("known preset").scenario();
    s.pairs = pairs;
    s
}
