//! Replicated parameter sweeps over kernels, sizes, platforms and
//! strategies, with CSV tables and SVG plots of the results.

mod plot;
mod recipes;
mod spec_file;
mod table;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{self, AnalysisParams};
use crate::engine::{run_simulation, SimConfig, SimError};
use crate::kernel::{KernelKind, LedgerError, Problem};
use crate::platform::{make_discrete_platform, make_uniform_platform, DriftPolicy, Platform, PlatformError};
use crate::rng::{derive_indexed, derive_seed, RandomStream};
use crate::strategies::StrategyId;

pub use plot::{emit_svg_plot, render_svg_plot, PLOT_COLUMNS};
pub use recipes::{recipe, RECIPE_NAMES};
pub use spec_file::parse_spec;
pub use table::{emit_csv, format_sig6, parse_csv, read_csv, round_sig6, write_csv, CsvRecord, CSV_HEADER};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("spec line {line}: {message}")]
    SpecSyntax { line: usize, message: String },
    #[error("run failed for {config}: {source}")]
    Run { config: String, source: SimError },
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("nothing to write: the table is empty")]
    EmptyTable,
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("unknown recipe {0:?}")]
    UnknownRecipe(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed csv row {row}: {message}")]
    CsvRow { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How worker speeds are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// All speeds equal.
    Homogeneous,
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Speeds drawn from a finite set of processor classes.
    Discrete(Vec<f64>),
    /// Uniform draw, then per-task jitter of the given magnitude.
    Dynamic {
        lo: f64,
        hi: f64,
        jitter: f64,
    },
}

impl Scenario {
    pub fn draw_platform(&self, p: usize, rng: &mut RandomStream) -> Result<Platform, PlatformError> {
        match self {
            Scenario::Homogeneous => Platform::homogeneous(p),
            Scenario::Uniform { lo, hi } => make_uniform_platform(p, *lo, *hi, rng),
            Scenario::Discrete(set) => make_discrete_platform(p, set, rng),
            Scenario::Dynamic { lo, hi, jitter } => {
                Ok(make_uniform_platform(p, *lo, *hi, rng)?.with_drift(DriftPolicy::jitter(*jitter)?))
            }
        }
    }

    /// Speed interval `[100 - h, 100 + h]`.
    pub fn heterogeneity(h: f64) -> Self {
        Scenario::Uniform { lo: 100.0 - h, hi: 100.0 + h }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Homogeneous => f.write_str("homogeneous"),
            Scenario::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            Scenario::Discrete(set) => {
                f.write_str("set")?;
                set.iter().try_for_each(|s| write!(f, ":{s}"))
            }
            Scenario::Dynamic { lo, hi, jitter } => write!(f, "dyn:{lo}:{hi}:{jitter}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    /// Accepts the canonical labels produced by `Display` and the named
    /// scenarios `unif.1`, `unif.2`, `set.3`, `set.5`, `dyn.5`, `dyn.20`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let named = match s {
            "unif.1" => Some(Scenario::Uniform { lo: 80.0, hi: 120.0 }),
            "unif.2" => Some(Scenario::Uniform { lo: 50.0, hi: 150.0 }),
            "set.3" => Some(Scenario::Discrete(vec![80.0, 100.0, 150.0])),
            "set.5" => Some(Scenario::Discrete(vec![40.0, 80.0, 100.0, 150.0, 200.0])),
            "dyn.5" => Some(Scenario::Dynamic { lo: 80.0, hi: 120.0, jitter: 0.05 }),
            "dyn.20" => Some(Scenario::Dynamic { lo: 80.0, hi: 120.0, jitter: 0.20 }),
            "homogeneous" => Some(Scenario::Homogeneous),
            _ => None,
        };
        if let Some(sc) = named {
            return Ok(sc);
        }
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or("");
        let nums: Vec<f64> = parts
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number {x:?} in scenario {s:?}")))
            .collect::<Result<_, _>>()?;
        match (head, nums.as_slice()) {
            ("uniform", [lo, hi]) => Ok(Scenario::Uniform { lo: *lo, hi: *hi }),
            ("set", set) if !set.is_empty() => Ok(Scenario::Discrete(set.to_vec())),
            ("dyn", [lo, hi, jitter]) => Ok(Scenario::Dynamic { lo: *lo, hi: *hi, jitter: *jitter }),
            _ => Err(format!("unknown scenario {s:?}")),
        }
    }
}

/// Which switch parameters the two-phase strategies run with.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaSpec {
    /// The homogeneous-platform optimum for each `(p, n)`.
    Auto,
    Fixed(f64),
    /// `lo, lo + step, ...` up to `hi` inclusive.
    Sweep {
        lo: f64,
        hi: f64,
        step: f64,
    },
}

impl BetaSpec {
    fn values(&self, p: usize, n: usize, kernel: KernelKind) -> Vec<f64> {
        match *self {
            BetaSpec::Auto => vec![analysis::beta_homogeneous(p, n, kernel)],
            BetaSpec::Fixed(b) => vec![b],
            BetaSpec::Sweep { lo, hi, step } => {
                let count = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=count).map(|i| lo + i as f64 * step).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kernel: KernelKind,
    pub ns: Vec<usize>,
    pub ps: Vec<usize>,
    pub strategies: Vec<StrategyId>,
    pub scenarios: Vec<Scenario>,
    pub beta: BetaSpec,
    pub replications: usize,
    pub base_seed: u64,
    /// Use one platform draw for every replication of a grid point instead
    /// of a fresh draw per replication.
    pub single_platform: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidSpec(m.to_string()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.ns.is_empty() || self.ps.is_empty() || self.strategies.is_empty() || self.scenarios.is_empty() {
            return bad("n, p, strategy and scenario lists must be nonempty");
        }
        if self.ns.contains(&0) || self.ps.contains(&0) {
            return bad("n and p must be positive");
        }
        if let Some(s) = self.strategies.iter().find(|s| s.kernel() != self.kernel) {
            return Err(ExperimentError::InvalidSpec(format!("strategy {s} does not apply to {}", self.kernel)));
        }
        match self.beta {
            BetaSpec::Fixed(b) if !(b.is_finite() && b >= 0.0) => bad("beta must be non-negative"),
            BetaSpec::Sweep { lo, hi, step } if !(lo >= 0.0 && hi >= lo && step > 0.0) => {
                bad("beta sweep needs 0 <= lo <= hi and step > 0")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub stddev: f64,
    pub count: usize,
    /// Normalized communication of each replication, in seed order.
    pub per_run: Vec<f64>,
}

impl ReplicationStats {
    pub fn from_runs(per_run: Vec<f64>) -> Self {
        let count = per_run.len();
        let mean = per_run.iter().sum::<f64>() / count as f64;
        let stddev = if count > 1 {
            (per_run.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stddev, count, per_run }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kernel: KernelKind,
    pub n: usize,
    pub p: usize,
    pub strategy: StrategyId,
    pub scenario: String,
    /// Switch parameter; `None` for single-phase strategies.
    pub beta: Option<f64>,
    pub stats: ReplicationStats,
    /// Mean predicted normalized communication, for two-phase strategies.
    pub analysis_pred: Option<f64>,
}

impl SweepRow {
    pub fn record(&self) -> CsvRecord {
        CsvRecord {
            kernel: self.kernel,
            n: self.n,
            p: self.p,
            strategy: self.strategy,
            scenario: self.scenario.clone(),
            beta: self.beta.map(round_sig6),
            mean_norm_comm: round_sig6(self.stats.mean),
            stddev: round_sig6(self.stats.stddev),
            replications: self.stats.count,
            analysis_pred: self.analysis_pred.map(round_sig6),
        }
    }
}

struct GridPoint<'a> {
    n: usize,
    p: usize,
    strategy: StrategyId,
    scenario: &'a Scenario,
    beta: Option<f64>,
}

impl GridPoint<'_> {
    fn platform_seed(&self, spec: &ExperimentSpec, rep: usize) -> u64 {
        let key = format!("platform|{}|{}|{}|{}", spec.kernel, self.n, self.p, self.scenario);
        let seed = derive_seed(spec.base_seed, &key);
        if spec.single_platform {
            seed
        } else {
            derive_indexed(seed, rep as u64)
        }
    }

    /// Independent of beta, so a beta sweep reuses the same decision stream.
    fn run_seed(&self, spec: &ExperimentSpec, rep: usize) -> u64 {
        let key = format!("run|{}|{}|{}|{}|{}", spec.kernel, self.n, self.p, self.scenario, self.strategy);
        derive_indexed(derive_seed(spec.base_seed, &key), rep as u64)
    }

    fn describe(&self, kernel: KernelKind, rep: usize, seed: u64) -> String {
        let beta = self.beta.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
        format!(
            "kernel={kernel} n={} p={} strategy={} scenario={} beta={beta} replication={rep} seed={seed}",
            self.n, self.p, self.strategy, self.scenario
        )
    }
}

/// One simulation of a grid point: normalized communication plus the
/// analytic prediction for two-phase strategies.
fn run_point(spec: &ExperimentSpec, point: &GridPoint, rep: usize) -> Result<(f64, Option<f64>), ExperimentError> {
    let mut platform_rng = RandomStream::new(point.platform_seed(spec, rep));
    let platform = point.scenario.draw_platform(point.p, &mut platform_rng)?;
    let problem = Problem::new(spec.kernel, point.n)?;
    let seed = point.run_seed(spec, rep);
    let mut config = SimConfig::new(problem, platform, point.strategy, seed);
    config.beta = point.beta;
    let result = run_simulation(&config)
        .map_err(|source| ExperimentError::Run { config: point.describe(spec.kernel, rep, seed), source })?;
    let prediction = match point.beta {
        Some(beta) => AnalysisParams::from_platform(&config.platform, point.n, spec.kernel)
            .ok()
            .and_then(|params| analysis::objective(beta, &params).ok()),
        None => None,
    };
    Ok((result.normalized_comm, prediction))
}

/// Runs every grid point of `spec`, `replications` times each.
///
/// Rows come out in grid order: scenario, n, p, strategy, beta. Runs are
/// spread over the current rayon pool; results do not depend on it.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>, ExperimentError> {
    spec.validate()?;
    let mut points = Vec::new();
    for scenario in &spec.scenarios {
        for &n in &spec.ns {
            for &p in &spec.ps {
                for &strategy in &spec.strategies {
                    if strategy.is_two_phase() {
                        for beta in spec.beta.values(p, n, spec.kernel) {
                            points.push(GridPoint { n, p, strategy, scenario, beta: Some(beta) });
                        }
                    } else {
                        points.push(GridPoint { n, p, strategy, scenario, beta: None });
                    }
                }
            }
        }
    }

    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|g| (0..spec.replications).map(move |r| (g, r))).collect();
    let outcomes: Vec<(f64, Option<f64>)> =
        jobs.par_iter().map(|&(g, r)| run_point(spec, &points[g], r)).collect::<Result<_, _>>()?;

    let rows = points
        .iter()
        .zip(outcomes.chunks(spec.replications))
        .map(|(point, runs)| {
            let per_run: Vec<f64> = runs.iter().map(|(v, _)| *v).collect();
            let preds: Option<Vec<f64>> = runs.iter().map(|(_, a)| *a).collect();
            SweepRow {
                kernel: spec.kernel,
                n: point.n,
                p: point.p,
                strategy: point.strategy,
                scenario: point.scenario.to_string(),
                beta: point.beta,
                stats: ReplicationStats::from_runs(per_run),
                analysis_pred: preds.map(|v| v.iter().sum::<f64>() / v.len() as f64),
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSweepRow {
    pub beta: f64,
    pub stats: ReplicationStats,
    pub analysis_pred: Option<f64>,
}

/// Runs the two-phase strategy of `kernel` for every beta on one fixed
/// platform draw; replications differ only in the strategy's random choices.
pub fn beta_sweep(
    kernel: KernelKind,
    p: usize,
    n: usize,
    scenario: &Scenario,
    betas: &[f64],
    replications: usize,
    seed: u64,
) -> Result<Vec<BetaSweepRow>, ExperimentError> {
    if betas.is_empty() {
        return Err(ExperimentError::InvalidSpec("beta list must be nonempty".into()));
    }
    let strategy = StrategyId::family(kernel)[3];
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let spec = ExperimentSpec {
            kernel,
            ns: vec![n],
            ps: vec![p],
            strategies: vec![strategy],
            scenarios: vec![scenario.clone()],
            beta: BetaSpec::Fixed(beta),
            replications,
            base_seed: seed,
            single_platform: true,
        };
        let row = run_sweep(&spec)?.pop().expect("one grid point");
        rows.push(BetaSweepRow { beta, stats: row.stats, analysis_pred: row.analysis_pred });
    }
    Ok(rows)
}

/// The platform [`beta_sweep`] runs on for these arguments.
pub fn beta_sweep_platform(
    kernel: KernelKind,
    p: usize,
    n: usize,
    scenario: &Scenario,
    seed: u64,
) -> Result<Platform, ExperimentError> {
    let spec = ExperimentSpec {
        kernel,
        ns: vec![n],
        ps: vec![p],
        strategies: vec![StrategyId::family(kernel)[3]],
        scenarios: vec![scenario.clone()],
        beta: BetaSpec::Auto,
        replications: 1,
        base_seed: seed,
        single_platform: true,
    };
    let point = GridPoint { n, p, strategy: spec.strategies[0], scenario, beta: None };
    Ok(scenario.draw_platform(p, &mut RandomStream::new(point.platform_seed(&spec, 0)))?)
}
