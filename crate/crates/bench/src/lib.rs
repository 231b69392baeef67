//! Fixtures shared by the criterion benches.

use dynsched::platform::make_uniform_platform;
use dynsched::{Platform, Problem, RandomStream, SimConfig, StrategyId};

/// Speeds drawn uniformly from `[10, 100]` with a fixed seed.
pub fn heterogeneous_platform(p: usize, seed: u64) -> Platform {
    make_uniform_platform(p, 10.0, 100.0, &mut RandomStream::new(seed)).expect("valid bounds")
}

pub fn config(problem: Problem, p: usize, strategy: StrategyId) -> SimConfig {
    SimConfig::new(problem, heterogeneous_platform(p, 42), strategy, 7)
}
