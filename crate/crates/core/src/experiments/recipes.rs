//! Named sweeps reproducing the published figures. Speed draws differ from
//! the original runs, so curves match in distribution, not point by point.

use crate::kernel::KernelKind;
use crate::strategies::StrategyId;

use super::{BetaSpec, ExperimentError, ExperimentSpec, Scenario};

pub const RECIPE_NAMES: [&str; 9] =
    ["fig2", "fig5", "fig6", "fig7", "fig8", "fig9", "fig-mat-40", "fig-mat-100", "fig-mat-beta"];

const WIDE: Scenario = Scenario::Uniform { lo: 10.0, hi: 100.0 };

fn p_range() -> Vec<usize> {
    (10..=100).step_by(10).collect()
}

fn comparison(kernel: KernelKind, n: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        kernel,
        ns: vec![n],
        ps: p_range(),
        strategies: StrategyId::family(kernel).to_vec(),
        scenarios: vec![WIDE],
        beta: BetaSpec::Auto,
        replications: 10,
        base_seed: seed,
        single_platform: false,
    }
}

fn beta_scan(kernel: KernelKind, n: usize, p: usize, hi: f64, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        ps: vec![p],
        strategies: vec![StrategyId::family(kernel)[3]],
        beta: BetaSpec::Sweep { lo: 1.0, hi, step: 0.25 },
        single_platform: true,
        ..comparison(kernel, n, seed)
    }
}

fn heterogeneity(scenarios: Vec<Scenario>, seed: u64) -> ExperimentSpec {
    ExperimentSpec { ps: vec![20], scenarios, replications: 50, ..comparison(KernelKind::Outer, 100, seed) }
}

/// The sweep behind a named figure; also returns the columns to plot
/// (x axis, series).
pub fn recipe(name: &str) -> Result<(ExperimentSpec, &'static str, &'static str), ExperimentError> {
    use KernelKind::*;
    let spec = match name {
        // Random and sorted against the data-aware dynamic strategy.
        "fig2" => ExperimentSpec { strategies: StrategyId::family(Outer)[..3].to_vec(), ..comparison(Outer, 100, 2) },
        "fig5" => comparison(Outer, 100, 5),
        "fig6" => comparison(Outer, 1000, 6),
        "fig7" => beta_scan(Outer, 100, 20, 8.0, 7),
        "fig8" => heterogeneity((0..10).map(|i| Scenario::heterogeneity(10.0 * i as f64)).collect(), 8),
        "fig9" => heterogeneity(
            ["unif.1", "unif.2", "set.3", "set.5", "dyn.5", "dyn.20"]
                .iter()
                .map(|s| s.parse().expect("named scenario"))
                .collect(),
            9,
        ),
        "fig-mat-40" => comparison(Matmul, 40, 40),
        "fig-mat-100" => comparison(Matmul, 100, 100),
        "fig-mat-beta" => beta_scan(Matmul, 40, 100, 6.0, 41),
        other => return Err(ExperimentError::UnknownRecipe(other.to_string())),
    };
    let axes = match name {
        "fig7" | "fig-mat-beta" => ("beta", "strategy"),
        "fig8" | "fig9" => ("scenario", "strategy"),
        _ => ("p", "strategy"),
    };
    Ok((spec, axes.0, axes.1))
}
