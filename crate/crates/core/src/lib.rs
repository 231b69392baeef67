//! Simulation and mean-field analysis of data-aware dynamic scheduling for
//! the block outer-product and block matrix-multiplication kernels on
//! heterogeneous master–worker platforms.
//!
//! The [`engine`] replays a demand-driven master–worker run under one of the
//! [`strategies`], counting every block the master ships. The [`analysis`]
//! module predicts the same volumes from a mean-field model and picks the
//! switch point of the two-phase strategies. [`experiments`] ties both into
//! parameter sweeps with CSV and SVG output.

pub mod analysis;
pub mod engine;
pub mod experiments;
pub mod kernel;
pub mod platform;
pub mod rng;
pub mod strategies;

pub use analysis::{optimize_beta, AnalysisParams, BetaResult};
pub use engine::{run_simulation, SimConfig, SimError, SimResult};
pub use kernel::{KernelKind, Problem, TaskId};
pub use platform::{DriftPolicy, Platform};
pub use rng::RandomStream;
pub use strategies::StrategyId;
